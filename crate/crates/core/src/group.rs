//! Reflection groups generated by a hyperplane family, their chambers, and the
//! word-parity character.
//!
//! A [`HyperplaneFamily`] fixes the fundamental chamber `Σ` (the intersection
//! of the open positive half-spaces). [`ReflectionGroup::generate`] enumerates
//! the group breadth-first from the identity, assigns `η(g) = (-1)^{|word|}`,
//! and checks at runtime the two facts the signed-sum identity needs: the
//! character is well defined, and the chambers `gΣ` do not overlap.
//!
//! Words are read left to right as compositions: the word `[i, j]` is the map
//! `s_i ∘ s_j`.

use std::fmt;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::geometry::{default_tolerance, dot, AffineIsometry, GeometryError, Hyperplane, Side};

/// Max-norm tolerance under which two enumerated isometries are the same element.
pub const ELEMENT_TOLERANCE: f64 = 1e-8;

/// Element cap used when the caller does not choose one.
pub const DEFAULT_CAP: usize = 64;

/// Number of random points drawn by the automatic disjointness check.
pub const DEFAULT_DISJOINTNESS_SAMPLES: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GroupError {
    #[error("hyperplane family is empty")]
    EmptyFamily,
    #[error("hyperplane {index} has dimension {got}, expected {expected}")]
    DimensionMismatch { index: usize, expected: usize, got: usize },
    #[error("witness point is not strictly inside hyperplane {index}")]
    WitnessOutside { index: usize },
    #[error("element cap must be at least 2, got {0}")]
    CapTooSmall(usize),
    #[error("disjointness check needs at least one sample")]
    NoSamples,
    #[error("character is inconsistent: words {} and {} give the same element with opposite parity", Word(.word_a), Word(.word_b))]
    CharacterInconsistency { word_a: Vec<usize>, word_b: Vec<usize> },
    #[error("chambers {} and {} overlap at {point:?}", Word(.word_a), Word(.word_b))]
    ChamberCollision { point: Vec<f64>, word_a: Vec<usize>, word_b: Vec<usize> },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Display adapter for generator words: `e` for the identity, `s0.s2.s1` otherwise.
pub struct Word<'a>(pub &'a [usize]);

impl fmt::Display for Word<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("e");
        }
        for (n, i) in self.0.iter().enumerate() {
            if n > 0 {
                f.write_str(".")?;
            }
            write!(f, "s{i}")?;
        }
        Ok(())
    }
}

/// The index set `Φ` together with a point of its chamber.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperplaneFamily {
    hyperplanes: Vec<Hyperplane>,
    dim: usize,
    witness: DVector<f64>,
}

impl HyperplaneFamily {
    /// `witness` must lie strictly inside every half-space; it proves `Σ` is nonempty.
    pub fn new(hyperplanes: Vec<Hyperplane>, witness: impl Into<DVector<f64>>) -> Result<Self, GroupError> {
        let witness = witness.into();
        let first = hyperplanes.first().ok_or(GroupError::EmptyFamily)?;
        let dim = first.dim();
        for (index, h) in hyperplanes.iter().enumerate() {
            if h.dim() != dim {
                return Err(GroupError::DimensionMismatch { index, expected: dim, got: h.dim() });
            }
        }
        if witness.len() != dim {
            return Err(GeometryError::DimensionMismatch { expected: dim, got: witness.len() }.into());
        }
        for (index, h) in hyperplanes.iter().enumerate() {
            if h.side(witness.as_slice()) != Side::Positive {
                return Err(GroupError::WitnessOutside { index });
            }
        }
        Ok(Self { hyperplanes, dim, witness })
    }

    pub fn hyperplanes(&self) -> &[Hyperplane] {
        &self.hyperplanes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn witness(&self) -> &DVector<f64> {
        &self.witness
    }

    /// Strictly inside every half-space (outside the default dead-band).
    pub fn contains_strict(&self, x: &[f64]) -> bool {
        self.hyperplanes.iter().all(|h| h.side(x) == Side::Positive)
    }

    /// Inside the closed chamber, relaxed by `tol` in signed distance.
    pub fn contains_closed(&self, x: &[f64], tol: f64) -> bool {
        self.hyperplanes.iter().all(|h| h.signed_distance(x) >= -tol)
    }

    /// The family seen in `total_dim` dimensions; the extra coordinates of the
    /// witness are taken from `extra_witness`.
    pub fn embed(&self, total_dim: usize, extra_witness: &[f64]) -> Result<Self, GroupError> {
        if total_dim != self.dim + extra_witness.len() {
            return Err(GeometryError::DimensionMismatch { expected: total_dim, got: self.dim + extra_witness.len() }.into());
        }
        let hyperplanes = self.hyperplanes.iter().map(|h| h.embed(total_dim)).collect::<Result<Vec<_>, _>>()?;
        let witness: Vec<f64> = self.witness.iter().copied().chain(extra_witness.iter().copied()).collect();
        Self::new(hyperplanes, DVector::from_vec(witness))
    }
}

/// One enumerated element with its character value and a shortest word.
#[derive(Debug, Clone)]
pub struct GroupElement {
    isometry: AffineIsometry,
    eta: i8,
    word: Vec<usize>,
    // Walls of gΣ as unit normals: <n_i, x> > c_i, stored row-wise.
    wall_normals: Vec<f64>,
    wall_offsets: Vec<f64>,
}

impl GroupElement {
    fn new(isometry: AffineIsometry, word: Vec<usize>, family: &HyperplaneFamily) -> Self {
        let d = family.dim();
        let m = family.hyperplanes().len();
        let mut wall_normals = Vec::with_capacity(m * d);
        let mut wall_offsets = Vec::with_capacity(m);
        for h in family.hyperplanes() {
            let norm = h.alpha().norm();
            let image = isometry.linear() * h.alpha();
            wall_offsets.push((h.offset() + image.dot(isometry.translation())) / norm);
            wall_normals.extend(image.iter().map(|v| v / norm));
        }
        let eta = if word.len().is_multiple_of(2) { 1 } else { -1 };
        Self { isometry, eta, word, wall_normals, wall_offsets }
    }

    pub fn isometry(&self) -> &AffineIsometry {
        &self.isometry
    }

    /// Character value, `+1` or `-1`.
    pub fn eta(&self) -> i8 {
        self.eta
    }

    pub fn word(&self) -> &[usize] {
        &self.word
    }

    pub fn is_identity(&self) -> bool {
        self.word.is_empty()
    }

    /// Smallest signed distance from `x` to the walls of `gΣ`; positive inside.
    #[inline]
    pub fn chamber_margin(&self, x: &[f64]) -> f64 {
        let d = x.len();
        let mut margin = f64::INFINITY;
        for (i, &off) in self.wall_offsets.iter().enumerate() {
            margin = margin.min(dot(&self.wall_normals[i * d..(i + 1) * d], x) - off);
        }
        margin
    }
}

/// Result of sampling chamber overlaps.
#[derive(Debug, Clone, PartialEq)]
pub struct DisjointnessReport {
    pub samples: usize,
    /// Largest number of open chambers any sample fell in.
    pub max_cover: usize,
    /// Samples outside every enumerated chamber.
    pub uncovered: usize,
    /// Hits per element, in enumeration order.
    pub hits: Vec<usize>,
    pub box_lo: Vec<f64>,
    pub box_hi: Vec<f64>,
}

/// Limits and checks applied by [`ReflectionGroup::generate_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateOptions {
    pub cap: usize,
    /// Stop after words of this length even if the cap is not reached.
    pub max_word_len: Option<usize>,
    /// Zero disables the automatic disjointness check.
    pub disjointness_samples: usize,
    pub seed: u64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self { cap: DEFAULT_CAP, max_word_len: None, disjointness_samples: DEFAULT_DISJOINTNESS_SAMPLES, seed: 0 }
    }
}

fn check_parity(existing: &[usize], word: &[usize]) -> Result<(), GroupError> {
    if existing.len() % 2 != word.len() % 2 {
        return Err(GroupError::CharacterInconsistency { word_a: existing.to_vec(), word_b: word.to_vec() });
    }
    Ok(())
}

/// Value of a signed fold plus whether the point fell outside every enumerated chamber.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fold {
    pub value: f64,
    pub gap: bool,
}

#[derive(Debug, Clone)]
pub struct ReflectionGroup {
    family: HyperplaneFamily,
    elements: Vec<GroupElement>,
    complete: bool,
    cap: usize,
    disjointness: Option<DisjointnessReport>,
}

impl ReflectionGroup {
    pub fn generate(family: HyperplaneFamily, cap: usize) -> Result<Self, GroupError> {
        Self::generate_with(family, GenerateOptions { cap, ..GenerateOptions::default() })
    }

    /// Breadth-first closure from the identity, multiplying by generators on the right.
    pub fn generate_with(family: HyperplaneFamily, options: GenerateOptions) -> Result<Self, GroupError> {
        if options.cap < 2 {
            return Err(GroupError::CapTooSmall(options.cap));
        }
        let d = family.dim();
        let generators: Vec<AffineIsometry> = family.hyperplanes().iter().map(Hyperplane::as_isometry).collect();
        let mut elements = vec![GroupElement::new(AffineIsometry::identity(d), Vec::new(), &family)];
        let mut frontier = vec![0usize];
        let mut complete = false;
        let mut word_len = 0usize;

        'levels: loop {
            let mut next = Vec::new();
            let at_length_limit = options.max_word_len.is_some_and(|max| word_len >= max);
            for &idx in &frontier {
                for (j, s) in generators.iter().enumerate() {
                    let candidate = elements[idx].isometry.compose(s)?;
                    let mut word = elements[idx].word.clone();
                    word.push(j);
                    if let Some(existing) = elements.iter().find(|e| e.isometry.distance(&candidate) <= ELEMENT_TOLERANCE) {
                        check_parity(&existing.word, &word)?;
                        continue;
                    }
                    if at_length_limit || elements.len() >= options.cap {
                        break 'levels;
                    }
                    elements.push(GroupElement::new(candidate, word, &family));
                    next.push(elements.len() - 1);
                }
            }
            if next.is_empty() {
                complete = true;
                break;
            }
            frontier = next;
            word_len += 1;
        }

        let mut group = Self { family, elements, complete, cap: options.cap, disjointness: None };
        if options.disjointness_samples > 0 {
            let report = group.verify_disjointness(options.disjointness_samples, options.seed)?;
            group.disjointness = Some(report);
        }
        Ok(group)
    }

    pub fn family(&self) -> &HyperplaneFamily {
        &self.family
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn element(&self, index: usize) -> &GroupElement {
        &self.elements[index]
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn dim(&self) -> usize {
        self.family.dim()
    }

    /// Report from the check run during generation, if it was enabled.
    pub fn disjointness(&self) -> Option<&DisjointnessReport> {
        self.disjointness.as_ref()
    }

    /// Index of an enumerated element equal to `iso`, if any.
    pub fn find(&self, iso: &AffineIsometry) -> Option<usize> {
        self.elements.iter().position(|e| e.isometry.distance(iso) <= ELEMENT_TOLERANCE)
    }

    /// Whether `g^{-1} x` lies in the closed chamber relaxed by `tol`.
    pub fn chamber_contains(&self, g: &GroupElement, x: &[f64], tol: f64) -> bool {
        g.chamber_margin(x) >= -tol
    }

    /// First element in enumeration order whose closed chamber contains `x`;
    /// `None` means no enumerated chamber covers the point.
    #[inline]
    pub fn locate_chamber(&self, x: &[f64]) -> Option<usize> {
        let mut tol = None;
        self.elements.iter().position(|g| {
            let margin = g.chamber_margin(x);
            margin >= 0.0 || margin >= -*tol.get_or_insert_with(|| default_tolerance(x))
        })
    }

    /// `Σ_g η(g) f(g^{-1} x)` for `f` supported in the closed chamber.
    ///
    /// Chambers are disjoint, so only the chamber containing `x` can contribute.
    pub fn signed_fold(&self, f: impl Fn(&[f64]) -> f64, x: &[f64]) -> Fold {
        let mut scratch = vec![0.0; x.len()];
        self.signed_fold_with(f, x, &mut scratch)
    }

    #[inline]
    pub fn signed_fold_with(&self, f: impl Fn(&[f64]) -> f64, x: &[f64], scratch: &mut [f64]) -> Fold {
        match self.locate_chamber(x) {
            Some(idx) => {
                let g = &self.elements[idx];
                g.isometry.apply_inverse_into(x, scratch);
                Fold { value: f64::from(g.eta) * f(scratch), gap: false }
            }
            None => Fold { value: 0.0, gap: true },
        }
    }

    /// Samples a box around the witness orbit and checks that no point lies in
    /// two open chambers.
    pub fn verify_disjointness(&self, samples: usize, seed: u64) -> Result<DisjointnessReport, GroupError> {
        if samples == 0 {
            return Err(GroupError::NoSamples);
        }
        let d = self.dim();
        let (box_lo, box_hi) = self.sampling_box();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hits = vec![0usize; self.elements.len()];
        let mut max_cover = 0;
        let mut uncovered = 0;
        let mut point = vec![0.0; d];
        for _ in 0..samples {
            for (p, (lo, hi)) in point.iter_mut().zip(box_lo.iter().zip(&box_hi)) {
                *p = lo + (hi - lo) * rng.random::<f64>();
            }
            let open_tol = 1e-9 * (1.0 + dot(&point, &point).sqrt());
            let mut first: Option<usize> = None;
            let mut cover = 0;
            for (idx, g) in self.elements.iter().enumerate() {
                if g.chamber_margin(&point) > open_tol {
                    cover += 1;
                    hits[idx] += 1;
                    match first {
                        None => first = Some(idx),
                        Some(a) => {
                            return Err(GroupError::ChamberCollision { point: point.clone(), word_a: self.elements[a].word.clone(), word_b: g.word.clone() })
                        }
                    }
                }
            }
            if cover == 0 {
                uncovered += 1;
            }
            max_cover = max_cover.max(cover);
        }
        Ok(DisjointnessReport { samples, max_cover, uncovered, hits, box_lo, box_hi })
    }

    /// Bounding box of the witness orbit, padded so cones around a common apex are sampled too.
    fn sampling_box(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for g in &self.elements {
            let image = g.isometry.apply(self.family.witness().as_slice());
            for i in 0..d {
                lo[i] = lo[i].min(image[i]);
                hi[i] = hi[i].max(image[i]);
            }
        }
        let extent = lo.iter().zip(&hi).map(|(l, h)| h - l).fold(0.0, f64::max);
        let pad = (0.25 * extent).max(1.0);
        for i in 0..d {
            lo[i] -= pad;
            hi[i] += pad;
        }
        (lo, hi)
    }
}
