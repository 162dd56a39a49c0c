//! Signals, memberships, classification schemes and per-class statistics.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::scalar::Scalar;

/// Layout of the samples: a plain sequence or a row-major image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Linear(usize),
    Grid { height: usize, width: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Linear(n) => n,
            Shape::Grid { height, width } => height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The observed signal `x_1 .. x_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet<T> {
    values: Vec<T>,
    shape: Shape,
    min: T,
    max: T,
}

impl<T: Scalar> SampleSet<T> {
    pub fn new(values: Vec<T>) -> Result<Self> {
        let n = values.len();
        Self::with_shape(values, Shape::Linear(n))
    }

    /// Builds an image signal from row-major pixels.
    pub fn grid(values: Vec<T>, height: usize, width: usize) -> Result<Self> {
        Self::with_shape(values, Shape::Grid { height, width })
    }

    pub fn with_shape(values: Vec<T>, shape: Shape) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("signal must contain at least one sample"));
        }
        if shape.len() != values.len() {
            return Err(invalid(format!(
                "shape {:?} holds {} samples but {} were given",
                shape,
                shape.len(),
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("sample {pos} is not finite")));
        }
        let (min, max) = values.iter().fold((values[0], values[0]), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
        Ok(Self {
            values,
            shape,
            min,
            max,
        })
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> T {
        self.min
    }

    pub fn max(&self) -> T {
        self.max
    }

    /// `V = max x_n - min x_n`.
    pub fn range(&self) -> T {
        self.max - self.min
    }

    pub fn mean(&self) -> T {
        self.values.iter().copied().sum::<T>() / T::from_count(self.len())
    }

    /// Population (biased) variance of all samples.
    pub fn variance(&self) -> T {
        let mean = self.mean();
        self.values
            .iter()
            .map(|&v| (v - mean) * (v - mean))
            .sum::<T>()
            / T::from_count(self.len())
    }

    /// Rows of a grid signal; a linear signal is a single row.
    pub fn rows(&self) -> Vec<&[T]> {
        match self.shape {
            Shape::Linear(_) => vec![&self.values[..]],
            Shape::Grid { width, .. } => self.values.chunks(width).collect(),
        }
    }
}

/// `N x J` soft assignment of samples to classes, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix<T> {
    rows: usize,
    classes: usize,
    data: Vec<T>,
}

impl<T: Scalar> MembershipMatrix<T> {
    /// Validates bounds and unit row sums.
    pub fn new(rows: usize, classes: usize, data: Vec<T>) -> Result<Self> {
        if classes == 0 {
            return Err(invalid("membership matrix needs at least one class"));
        }
        if data.len() != rows * classes {
            return Err(invalid(format!(
                "expected {} entries for a {rows}x{classes} matrix, got {}",
                rows * classes,
                data.len()
            )));
        }
        let m = Self {
            rows,
            classes,
            data,
        };
        m.check_feasible()?;
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let classes = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != classes) {
            return Err(invalid("membership rows have differing lengths"));
        }
        Self::new(rows.len(), classes, rows.concat())
    }

    pub fn from_scheme(scheme: &ClassificationScheme) -> Self {
        let classes = scheme.classes();
        let mut data = vec![T::zero(); scheme.len() * classes];
        for (n, &z) in scheme.labels().iter().enumerate() {
            data[n * classes + z] = T::one();
        }
        Self {
            rows: scheme.len(),
            classes,
            data,
        }
    }

    pub fn uniform(rows: usize, classes: usize) -> Self {
        let w = T::one() / T::from_count(classes.max(1));
        Self {
            rows,
            classes,
            data: vec![w; rows * classes],
        }
    }

    pub(crate) fn from_raw(rows: usize, classes: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(data.len(), rows * classes);
        Self {
            rows,
            classes,
            data,
        }
    }

    fn check_feasible(&self) -> Result<()> {
        let tol = T::feasibility_tol();
        for (n, row) in self.data.chunks(self.classes).enumerate() {
            if let Some(i) = row.iter().position(|&a| !(a >= T::zero() && a <= T::one())) {
                return Err(invalid(format!(
                    "membership ({n}, {i}) = {} lies outside [0, 1]",
                    row[i]
                )));
            }
            let sum: T = row.iter().copied().sum();
            if (sum - T::one()).abs() > tol {
                return Err(invalid(format!("membership row {n} sums to {sum}")));
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, n: usize, i: usize) -> T {
        self.data[n * self.classes + i]
    }

    pub fn row(&self, n: usize) -> &[T] {
        &self.data[n * self.classes..(n + 1) * self.classes]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks(self.classes)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Every entry exactly 0 or 1.
    pub fn is_hard(&self) -> bool {
        self.data.iter().all(|&a| a == T::zero() || a == T::one())
    }

    /// The encoded scheme if the matrix is hard.
    pub fn to_scheme(&self) -> Option<ClassificationScheme> {
        if !self.is_hard() {
            return None;
        }
        let labels = self
            .iter_rows()
            .map(|row| row.iter().position(|&a| a == T::one()))
            .collect::<Option<Vec<_>>>()?;
        Some(ClassificationScheme {
            labels,
            classes: self.classes,
        })
    }

    /// Hard scheme taking the largest membership per row (ties to the lower class).
    pub fn argmax_scheme(&self) -> ClassificationScheme {
        let labels = self
            .iter_rows()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold(
                        (0, row[0]),
                        |best, (i, &a)| if a > best.1 { (i, a) } else { best },
                    )
                    .0
            })
            .collect();
        ClassificationScheme {
            labels,
            classes: self.classes,
        }
    }

    /// Column `i` of the result is column `perm[i]` of `self`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.classes)?;
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.iter_rows() {
            data.extend(perm.iter().map(|&src| row[src]));
        }
        Ok(Self::from_raw(self.rows, self.classes, data))
    }
}

pub(crate) fn check_permutation(perm: &[usize], classes: usize) -> Result<()> {
    let mut seen = vec![false; classes];
    if perm.len() != classes {
        return Err(invalid("permutation length differs from class count"));
    }
    for &p in perm {
        if p >= classes || std::mem::replace(&mut seen[p], true) {
            return Err(invalid(format!("{perm:?} is not a permutation")));
        }
    }
    Ok(())
}

/// Hard labels `z_n`, stored zero-based (`0..classes`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ClassificationScheme {
    labels: Vec<usize>,
    classes: usize,
}

impl ClassificationScheme {
    pub fn new(labels: Vec<usize>, classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(invalid("a scheme needs at least one class"));
        }
        if let Some(pos) = labels.iter().position(|&z| z >= classes) {
            return Err(invalid(format!(
                "label {} at sample {pos} is outside 0..{classes}",
                labels[pos]
            )));
        }
        Ok(Self { labels, classes })
    }

    /// Builds a scheme from the 1-based labels used in files.
    pub fn from_one_based(labels: &[usize], classes: usize) -> Result<Self> {
        let zero = labels
            .iter()
            .enumerate()
            .map(|(n, &z)| {
                z.checked_sub(1)
                    .ok_or_else(|| invalid(format!("label 0 at sample {n}; labels start at 1")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(zero, classes)
    }

    pub fn single_class(n: usize) -> Self {
        Self {
            labels: vec![0; n],
            classes: 1,
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn one_based(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels.iter().map(|z| z + 1)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for &z in &self.labels {
            c[z] += 1;
        }
        c
    }

    /// Relabels class `i` as `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.classes)?;
        Ok(Self {
            labels: self.labels.iter().map(|&z| perm[z]).collect(),
            classes: self.classes,
        })
    }

    pub fn to_membership<T: Scalar>(&self) -> MembershipMatrix<T> {
        MembershipMatrix::from_scheme(self)
    }
}

/// Mean and biased variance of one non-empty class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMoments<T> {
    pub mean: T,
    pub variance: T,
}

/// Per-class `(p_i, mu_i, sigma_i^2)` and the global variance.
///
/// A class with zero total membership has `None` moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats<T> {
    pub mass: Vec<T>,
    pub weights: Vec<T>,
    pub moments: Vec<Option<ClassMoments<T>>>,
    pub mean_x: T,
    pub variance_x: T,
}

impl<T: Scalar> ClassStats<T> {
    pub fn classes(&self) -> usize {
        self.weights.len()
    }

    pub fn mean(&self, i: usize) -> Option<T> {
        self.moments[i].map(|m| m.mean)
    }

    pub fn variance(&self, i: usize) -> Option<T> {
        self.moments[i].map(|m| m.variance)
    }

    /// Builds statistics directly from class summaries.
    pub fn from_parts(weights: Vec<T>, variances: Vec<T>, means: Vec<T>, variance_x: T) -> Self {
        let moments = means
            .iter()
            .zip(&variances)
            .map(|(&mean, &variance)| Some(ClassMoments { mean, variance }))
            .collect();
        let mean_x = weights.iter().zip(&means).map(|(&p, &m)| p * m).sum();
        Self {
            mass: weights.clone(),
            weights,
            moments,
            mean_x,
            variance_x,
        }
    }
}

/// Computes the constraint-equation statistics of the relaxed program for `a`.
pub fn class_stats<T: Scalar>(x: &SampleSet<T>, a: &MembershipMatrix<T>) -> Result<ClassStats<T>> {
    if a.rows() != x.len() {
        return Err(invalid(format!(
            "membership has {} rows but the signal has {} samples",
            a.rows(),
            x.len()
        )));
    }
    Ok(class_stats_unchecked(x.values(), a))
}

pub(crate) fn class_stats_unchecked<T: Scalar>(x: &[T], a: &MembershipMatrix<T>) -> ClassStats<T> {
    let j = a.classes();
    let n_total = T::from_count(x.len());
    let mut mass = vec![T::zero(); j];
    let mut first = vec![T::zero(); j];
    for (row, &xn) in a.iter_rows().zip(x) {
        for i in 0..j {
            mass[i] += row[i];
            first[i] += row[i] * xn;
        }
    }
    let means: Vec<Option<T>> = (0..j)
        .map(|i| (mass[i] > T::zero()).then(|| first[i] / mass[i]))
        .collect();
    let mut second = vec![T::zero(); j];
    for (row, &xn) in a.iter_rows().zip(x) {
        for i in 0..j {
            if let Some(mu) = means[i] {
                second[i] += row[i] * (xn - mu) * (xn - mu);
            }
        }
    }
    let moments = (0..j)
        .map(|i| {
            means[i].map(|mean| ClassMoments {
                mean,
                variance: second[i] / mass[i],
            })
        })
        .collect();
    let mean_x = x.iter().copied().sum::<T>() / n_total;
    let variance_x = x.iter().map(|&v| (v - mean_x) * (v - mean_x)).sum::<T>() / n_total;
    ClassStats {
        weights: mass.iter().map(|&s| s / n_total).collect(),
        mass,
        moments,
        mean_x,
        variance_x,
    }
}

/// `sum_n a_ni (x_n - reference)^2 / sum_n a_ni` for class `i`.
///
/// With `reference` equal to the class mean this is the class variance;
/// for any other reference it exceeds it by `(reference - mean)^2`.
pub fn spread_about<T: Scalar>(
    x: &SampleSet<T>,
    a: &MembershipMatrix<T>,
    class: usize,
    reference: T,
) -> Result<T> {
    if class >= a.classes() || a.rows() != x.len() {
        return Err(invalid("class index or shape mismatch"));
    }
    let (num, den) =
        a.iter_rows()
            .zip(x.values())
            .fold((T::zero(), T::zero()), |(num, den), (row, &xn)| {
                let w = row[class];
                (num + w * (xn - reference) * (xn - reference), den + w)
            });
    if den <= T::zero() {
        return Err(Error::UndefinedClass(class));
    }
    Ok(num / den)
}

/// One Gaussian source of the mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub mean: f64,
    pub variance: f64,
    pub weight: f64,
}

/// How samples are assigned to sources.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Layout {
    /// Contiguous runs `(class, length)`, classes zero-based.
    Blocks(Vec<(usize, usize)>),
    /// Each sample picks its source independently with the component weights.
    Iid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub components: Vec<Component>,
    pub layout: Layout,
    pub seed: u64,
}

impl MixtureSpec {
    /// Equal-length contiguous blocks, one per component, in component order.
    pub fn blocks(components: Vec<Component>, n: usize, seed: u64) -> Self {
        let j = components.len().max(1);
        let runs = (0..components.len())
            .map(|c| (c, n / j + usize::from(c < n % j)))
            .collect();
        Self {
            components,
            layout: Layout::Blocks(runs),
            seed,
        }
    }

    pub fn iid(components: Vec<Component>, seed: u64) -> Self {
        Self {
            components,
            layout: Layout::Iid,
            seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn classes(&self) -> usize {
        self.components.len()
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if n == 0 {
            return Err(invalid("sample count must be at least 1"));
        }
        if self.components.is_empty() {
            return Err(invalid("mixture needs at least one component"));
        }
        for (c, comp) in self.components.iter().enumerate() {
            if !comp.mean.is_finite() {
                return Err(invalid(format!("component {c}: mean is not finite")));
            }
            if !(comp.variance > 0.0 && comp.variance.is_finite()) {
                return Err(invalid(format!("component {c}: variance must be positive")));
            }
            if !(comp.weight > 0.0) {
                return Err(invalid(format!("component {c}: weight must be positive")));
            }
        }
        let total: f64 = self.components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(invalid(format!("component weights sum to {total}, not 1")));
        }
        if let Layout::Blocks(runs) = &self.layout {
            if let Some(&(c, _)) = runs.iter().find(|(c, _)| *c >= self.components.len()) {
                return Err(invalid(format!("block refers to unknown class {c}")));
            }
            let covered: usize = runs.iter().map(|&(_, len)| len).sum();
            if covered != n {
                return Err(invalid(format!(
                    "block run-lengths cover {covered} samples, expected {n}"
                )));
            }
        }
        Ok(())
    }
}

/// Draws a linear signal of `n` samples and its ground-truth labels.
pub fn generate<T: Scalar>(
    spec: &MixtureSpec,
    n: usize,
) -> Result<(SampleSet<T>, ClassificationScheme)> {
    generate_shaped(spec, Shape::Linear(n))
}

/// Same as [`generate`] with an explicit (possibly 2D) shape; grids are filled row-major.
pub fn generate_shaped<T: Scalar>(
    spec: &MixtureSpec,
    shape: Shape,
) -> Result<(SampleSet<T>, ClassificationScheme)> {
    let n = shape.len();
    spec.validate(n)?;
    let mut rng = rng::generator(spec.seed, rng::STREAM_GENERATE);
    let normals = spec
        .components
        .iter()
        .map(|c| Normal::new(c.mean, c.variance.sqrt()))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| invalid(e.to_string()))?;

    let labels: Vec<usize> = match &spec.layout {
        Layout::Blocks(runs) => runs
            .iter()
            .flat_map(|&(c, len)| std::iter::repeat_n(c, len))
            .collect(),
        Layout::Iid => Vec::with_capacity(n),
    };
    let mut truth = labels;
    let mut values = Vec::with_capacity(n);
    for idx in 0..n {
        let class = match spec.layout {
            Layout::Blocks(_) => truth[idx],
            Layout::Iid => {
                let c = pick_weighted(&mut rng, spec.components.iter().map(|c| c.weight));
                truth.push(c);
                c
            }
        };
        values.push(T::lit(normals[class].sample(&mut rng)));
    }
    let x = SampleSet::with_shape(values, shape)?;
    let scheme = ClassificationScheme::new(truth, spec.classes())?;
    Ok((x, scheme))
}

/// Index drawn with probability proportional to `weights` (assumed to sum to ~1).
pub(crate) fn pick_weighted<R: Rng>(rng: &mut R, weights: impl Iterator<Item = f64>) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if w > 0.0 {
            last = i;
        }
        acc += w;
        if u < acc {
            return i;
        }
    }
    last
}
