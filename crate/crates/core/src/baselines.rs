//! Reference classifiers: scalar k-means, a 1D Gaussian-mixture EM, and
//! exhaustive search over hard labelings for small instances.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gain::Objective;
use crate::model::{class_stats_unchecked, ClassificationScheme, MembershipMatrix, SampleSet};
use crate::rng;
use crate::scalar::Scalar;

/// Lloyd's algorithm on scalar samples with k-means++ seeding.
///
/// Ties in the assignment step go to the lower class index. A cluster that
/// ends up empty is re-seeded at the sample farthest from its current center.
pub fn kmeans<T: Scalar>(
    x: &SampleSet<T>,
    classes: usize,
    seed: u64,
    max_iters: usize,
) -> Result<ClassificationScheme> {
    Ok(kmeans_fit(x, classes, seed, max_iters)?.0)
}

fn kmeans_fit<T: Scalar>(
    x: &SampleSet<T>,
    classes: usize,
    seed: u64,
    max_iters: usize,
) -> Result<(ClassificationScheme, Vec<T>)> {
    if classes == 0 {
        return Err(invalid("number of classes must be at least 1"));
    }
    let values = x.values();
    let n = values.len();
    let mut centers = kmeans_pp(values, classes, seed);
    let mut labels = vec![usize::MAX; n];
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        for (z, &v) in labels.iter_mut().zip(values) {
            let best = nearest(&centers, v);
            if *z != best {
                *z = best;
                changed = true;
            }
        }
        let mut sums = vec![T::zero(); classes];
        let mut counts = vec![0usize; classes];
        for (&z, &v) in labels.iter().zip(values) {
            sums[z] += v;
            counts[z] += 1;
        }
        for c in 0..classes {
            if counts[c] > 0 {
                centers[c] = sums[c] / T::from_count(counts[c]);
            } else if n >= classes {
                // Farthest sample from the center it is currently assigned to.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = (values[a] - centers[labels[a]]).abs();
                        let db = (values[b] - centers[labels[b]]).abs();
                        da.partial_cmp(&db)
                            .unwrap_or(std::cmp::Ordering::Equal)
                            .then(b.cmp(&a))
                    })
                    .expect("non-empty signal");
                centers[c] = values[far];
                labels[far] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok((ClassificationScheme::new(labels, classes)?, centers))
}

fn nearest<T: Scalar>(centers: &[T], v: T) -> usize {
    centers
        .iter()
        .enumerate()
        .fold((0, T::infinity()), |best, (i, &c)| {
            let d = (v - c).abs();
            if d < best.1 {
                (i, d)
            } else {
                best
            }
        })
        .0
}

fn kmeans_pp<T: Scalar>(values: &[T], classes: usize, seed: u64) -> Vec<T> {
    let mut rng = rng::generator(seed, rng::STREAM_KMEANS);
    let n = values.len();
    let mut centers = vec![values[rng.random_range(0..n)]];
    let mut dist: Vec<f64> = values
        .iter()
        .map(|&v| (v - centers[0]).as_f64().powi(2))
        .collect();
    while centers.len() < classes {
        let total: f64 = dist.iter().sum();
        let idx = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            dist.iter()
                .position(|&d| {
                    acc += d;
                    acc > target
                })
                .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        let c = values[idx];
        centers.push(c);
        for (d, &v) in dist.iter_mut().zip(values) {
            *d = d.min((v - c).as_f64().powi(2));
        }
    }
    centers
}

/// Within-cluster sum of squares of a labeling.
pub fn within_cluster_ss<T: Scalar>(x: &SampleSet<T>, z: &ClassificationScheme) -> T {
    let stats = class_stats_unchecked(x.values(), &z.to_membership());
    stats
        .mass
        .iter()
        .zip(&stats.moments)
        .filter_map(|(&m, mom)| mom.map(|mom| m * mom.variance))
        .sum()
}

/// One component of a 1D Gaussian mixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent<T> {
    pub weight: T,
    pub mean: T,
    pub variance: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams<T> {
    pub components: Vec<GmmComponent<T>>,
    pub log_likelihood: T,
}

#[derive(Debug, Clone)]
pub struct EmFit<T> {
    pub params: GmmParams<T>,
    pub responsibilities: MembershipMatrix<T>,
    /// Argmax of the responsibilities, ties to the lower class.
    pub scheme: ClassificationScheme,
    /// Log-likelihood after every M step, starting with the initial parameters.
    pub log_likelihood_trace: Vec<T>,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// EM for a `classes`-component 1D Gaussian mixture.
///
/// Initialized from k-means: component means are the cluster means, weights
/// the cluster fractions, and every variance the pooled within-cluster
/// variance. Variances are floored at `1e-12 * max(sigma_x^2, 1)`. Iteration
/// stops once the log-likelihood gain drops below `tol * max(|LL|, 1)`.
pub fn em_gmm<T: Scalar>(
    x: &SampleSet<T>,
    classes: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<EmFit<T>> {
    if classes == 0 {
        return Err(invalid("number of classes must be at least 1"));
    }
    let values = x.values();
    let n = values.len();
    let mut warnings = Vec::new();
    if n < classes {
        return Err(invalid(format!(
            "EM needs at least {classes} samples, got {n}"
        )));
    }
    let floor = T::lit(crate::gain::VARIANCE_FLOOR_REL) * x.variance().max(T::one());

    if x.range() == T::zero() {
        warnings.push("degenerate signal: all samples are equal; fitted a single component".into());
        let mut components = vec![
            GmmComponent {
                weight: T::zero(),
                mean: values[0],
                variance: floor,
            };
            classes
        ];
        components[0].weight = T::one();
        let responsibilities = ClassificationScheme::single_class(n);
        let responsibilities =
            ClassificationScheme::new(responsibilities.labels().to_vec(), classes)?;
        let ll = log_likelihood(values, &components);
        return Ok(EmFit {
            params: GmmParams {
                components,
                log_likelihood: ll,
            },
            scheme: responsibilities.clone(),
            responsibilities: responsibilities.to_membership(),
            log_likelihood_trace: vec![ll],
            iterations: 0,
            warnings,
        });
    }

    let (init, centers) = kmeans_fit(x, classes, seed, 100)?;
    let counts = init.counts();
    let pooled = (within_cluster_ss(x, &init) / T::from_count(n)).max(floor);
    let mut components: Vec<GmmComponent<T>> = (0..classes)
        .map(|c| GmmComponent {
            weight: T::from_count(counts[c].max(1)) / T::from_count(n),
            mean: centers[c],
            variance: pooled,
        })
        .collect();
    let total: T = components.iter().map(|c| c.weight).sum();
    for c in &mut components {
        c.weight /= total;
    }

    let mut resp = vec![T::zero(); n * classes];
    let mut ll = e_step(values, &components, &mut resp);
    let mut trace = vec![ll];
    let tol = T::lit(tol);
    let mut iterations = 0;
    while iterations < max_iters {
        m_step(values, &resp, &mut components, floor);
        let next = e_step(values, &components, &mut resp);
        iterations += 1;
        trace.push(next);
        let gain = next - ll;
        ll = next;
        if gain <= tol * ll.abs().max(T::one()) {
            break;
        }
    }
    let responsibilities = MembershipMatrix::from_raw(n, classes, resp);
    let scheme = responsibilities.argmax_scheme();
    Ok(EmFit {
        params: GmmParams {
            components,
            log_likelihood: ll,
        },
        responsibilities,
        scheme,
        log_likelihood_trace: trace,
        iterations,
        warnings,
    })
}

fn log_density<T: Scalar>(v: T, c: &GmmComponent<T>) -> T {
    let two = T::lit(2.0);
    let d = v - c.mean;
    -(T::PI() * two * c.variance).ln() / two - d * d / (two * c.variance)
}

/// Fills responsibilities and returns the log-likelihood of the current parameters.
fn e_step<T: Scalar>(values: &[T], comps: &[GmmComponent<T>], resp: &mut [T]) -> T {
    let j = comps.len();
    let mut ll = T::zero();
    for (row, &v) in resp.chunks_mut(j).zip(values) {
        let mut top = T::neg_infinity();
        for (r, c) in row.iter_mut().zip(comps) {
            *r = if c.weight > T::zero() {
                c.weight.ln() + log_density(v, c)
            } else {
                T::neg_infinity()
            };
            top = top.max(*r);
        }
        let mut sum = T::zero();
        for r in row.iter_mut() {
            *r = (*r - top).exp();
            sum += *r;
        }
        for r in row.iter_mut() {
            *r /= sum;
        }
        ll += top + sum.ln();
    }
    ll
}

fn m_step<T: Scalar>(values: &[T], resp: &[T], comps: &mut [GmmComponent<T>], floor: T) {
    let j = comps.len();
    let n = T::from_count(values.len());
    for (i, c) in comps.iter_mut().enumerate() {
        let (mass, first) = resp
            .chunks(j)
            .zip(values)
            .fold((T::zero(), T::zero()), |(m, s), (row, &v)| {
                (m + row[i], s + row[i] * v)
            });
        if mass <= T::zero() {
            c.weight = T::zero();
            continue;
        }
        let mean = first / mass;
        let second = resp
            .chunks(j)
            .zip(values)
            .map(|(row, &v)| row[i] * (v - mean) * (v - mean))
            .sum::<T>();
        c.weight = mass / n;
        c.mean = mean;
        c.variance = (second / mass).max(floor);
    }
}

fn log_likelihood<T: Scalar>(values: &[T], comps: &[GmmComponent<T>]) -> T {
    let mut scratch = vec![T::zero(); values.len() * comps.len()];
    e_step(values, comps, &mut scratch)
}

/// Relabels classes in order of first appearance (`0, 1, ..`).
pub fn canonical_labels(z: &ClassificationScheme) -> ClassificationScheme {
    let mut map = vec![usize::MAX; z.classes()];
    let mut next = 0;
    let labels = z
        .labels()
        .iter()
        .map(|&l| {
            if map[l] == usize::MAX {
                map[l] = next;
                next += 1;
            }
            map[l]
        })
        .collect();
    ClassificationScheme::new(labels, z.classes()).expect("canonical labels stay in range")
}

/// Largest `J^N` the exhaustive search accepts.
pub const BRUTE_FORCE_LIMIT: u64 = 1 << 24;

/// Global minimizer of the objective over hard labelings.
///
/// Labelings are enumerated once per class-permutation orbit (restricted
/// growth strings) in lexicographic order; the first minimizer wins ties.
/// Labelings that leave classes empty are included.
pub fn brute_force_integer<T: Scalar>(
    x: &SampleSet<T>,
    classes: usize,
) -> Result<(ClassificationScheme, T)> {
    if classes == 0 {
        return Err(invalid("number of classes must be at least 1"));
    }
    let n = x.len();
    let too_large = Error::TooLarge {
        samples: n,
        classes,
    };
    let count = u32::try_from(n)
        .ok()
        .and_then(|n| (classes as u64).checked_pow(n))
        .ok_or(too_large.clone())?;
    if count > BRUTE_FORCE_LIMIT {
        return Err(too_large);
    }
    let values = x.values();
    let objective = Objective::new(values);

    // labels[k] <= 1 + max(labels[..k]) and < classes.
    let mut labels = vec![0usize; n];
    let mut prefix_max = vec![0usize; n];
    let mut best_labels = labels.clone();
    let mut best_f = T::infinity();
    let mut mass = vec![T::zero(); classes];
    let mut first = vec![T::zero(); classes];
    let mut second = vec![T::zero(); classes];
    loop {
        let f = hard_objective(
            &objective,
            values,
            &labels,
            &mut mass,
            &mut first,
            &mut second,
        );
        if f < best_f {
            best_f = f;
            best_labels.copy_from_slice(&labels);
        }
        // Advance to the next restricted growth string.
        let mut k = n;
        loop {
            if k <= 1 {
                let scheme = ClassificationScheme::new(best_labels, classes)?;
                return Ok((scheme, best_f));
            }
            k -= 1;
            let cap = (prefix_max[k - 1] + 1).min(classes - 1);
            if labels[k] < cap {
                labels[k] += 1;
                prefix_max[k] = prefix_max[k - 1].max(labels[k]);
                for m in k + 1..n {
                    labels[m] = 0;
                    prefix_max[m] = prefix_max[k];
                }
                break;
            }
        }
    }
}

fn hard_objective<T: Scalar>(
    objective: &Objective<'_, T>,
    values: &[T],
    labels: &[usize],
    mass: &mut [T],
    first: &mut [T],
    second: &mut [T],
) -> T {
    mass.fill(T::zero());
    first.fill(T::zero());
    second.fill(T::zero());
    for (&z, &v) in labels.iter().zip(values) {
        mass[z] += T::one();
        first[z] += v;
    }
    for (m, s) in first.iter_mut().zip(mass.iter()) {
        if *s > T::zero() {
            *m /= *s;
        }
    }
    for (&z, &v) in labels.iter().zip(values) {
        let d = v - first[z];
        second[z] += d * d;
    }
    let n = T::from_count(values.len());
    let terms = mass
        .iter()
        .zip(second.iter())
        .filter(|(&s, _)| s > T::zero())
        .map(|(&s, &q)| (s / n, q / s));
    objective.value_from_parts(terms)
}
