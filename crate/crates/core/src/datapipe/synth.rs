//! Synthetic heterogeneous multi-client dataset generator.
//!
//! A hidden linear teacher (k x d_in) defines the rubric: label j of a sample
//! is 1 iff teacher row j has non-negative inner product with its features.
//! Features come from a mixture of Gaussian components whose per-client
//! weights are Dirichlet-distributed, so small concentrations skew each
//! client toward a few components. Heterogeneity knobs: per-client sizes,
//! the Dirichlet concentration, and per-client label-flip noise.
//!
//! Samples closer than [`FEATURE_MARGIN`] to any rubric hyperplane are
//! rejected and redrawn, so the noiseless task is separable with a margin.
//! Component means are centered to sum to zero, which keeps the optimal
//! decision boundaries through the origin after normalization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::schema::{RecordSchema, StudentRecord};
use crate::error::{Error, Result};
use crate::scalar::{cast, Scalar};

/// Minimum |unit-teacher-row . x| for a sample to be kept.
pub const FEATURE_MARGIN: f64 = 0.25;

/// Scale of the mixture component means relative to 1/sqrt(d_in).
pub const COMPONENT_SHIFT: f64 = 2.0;

const MAX_DRAWS_PER_RECORD: usize = 10_000;

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HeterogeneityProfile {
    pub num_clients: usize,
    /// Per-client sample counts.
    pub sizes: Vec<usize>,
    /// Dirichlet concentration for the per-client mixture weights; +inf
    /// means exactly uniform weights (IID clients).
    pub label_skew: f64,
    /// Per-client probability of flipping each rubric bit, in [0, 0.5].
    pub label_noise_rates: Vec<f64>,
    pub seed: u64,
}

impl HeterogeneityProfile {
    /// IID profile: uniform mixture weights, equal sizes, no label noise.
    pub fn iid(num_clients: usize, size: usize, seed: u64) -> Self {
        Self {
            num_clients,
            sizes: vec![size; num_clients],
            label_skew: f64::INFINITY,
            label_noise_rates: vec![0.0; num_clients],
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::InvalidConfig("need at least one client".into()));
        }
        if self.sizes.len() != self.num_clients {
            return Err(Error::InvalidConfig(format!(
                "{} sizes for {} clients",
                self.sizes.len(),
                self.num_clients
            )));
        }
        if self.sizes.iter().any(|s| *s == 0) {
            return Err(Error::InvalidConfig("client sizes must be positive".into()));
        }
        if self.label_noise_rates.len() != self.num_clients {
            return Err(Error::InvalidConfig(format!(
                "{} noise rates for {} clients",
                self.label_noise_rates.len(),
                self.num_clients
            )));
        }
        if self
            .label_noise_rates
            .iter()
            .any(|r| !(0.0..=0.5).contains(r))
        {
            return Err(Error::InvalidConfig(
                "label noise rates must lie in [0, 0.5]".into(),
            ));
        }
        if !(self.label_skew > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "label_skew must be positive (or +inf for IID), got {}",
                self.label_skew
            )));
        }
        Ok(())
    }
}

/// Derived generator state: the hidden teacher and the mixture components.
///
/// RNG streams are split per purpose: stream 0 draws the world itself,
/// streams `1..=num_clients` draw the per-client datasets, and callers pick
/// streams above `num_clients` for public (test / calibration) sets, so
/// per-client generation is order-independent and can run concurrently.
#[derive(Clone, Debug)]
pub struct SyntheticWorld<F: Scalar> {
    profile: HeterogeneityProfile,
    d_in: usize,
    k: usize,
    teacher: Vec<Vec<f64>>,
    unit_teacher: Vec<Vec<f64>>,
    components: Vec<Vec<f64>>,
    _marker: std::marker::PhantomData<F>,
}

impl<F: Scalar> SyntheticWorld<F> {
    pub fn new(profile: HeterogeneityProfile, schema: &RecordSchema) -> Result<Self> {
        profile.validate()?;
        let d_in = schema.d_in();
        let k = schema.k();
        if d_in == 0 || k == 0 {
            return Err(Error::InvalidConfig(
                "schema must define feature and label arities".into(),
            ));
        }

        let mut rng = ChaCha12Rng::seed_from_u64(profile.seed);
        rng.set_stream(0);

        let teacher: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..d_in).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect();
        let unit_teacher = teacher
            .iter()
            .map(|row| {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                row.iter().map(|v| v / norm).collect()
            })
            .collect();

        let num_components = profile.num_clients;
        let shift = COMPONENT_SHIFT / (d_in as f64).sqrt();
        let mut components: Vec<Vec<f64>> = (0..num_components)
            .map(|_| {
                (0..d_in)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * shift
                    })
                    .collect()
            })
            .collect();
        // Center the component means so the global feature mean is ~0 and the
        // teacher hyperplanes stay expressible without a bias term.
        for d in 0..d_in {
            let mean = components.iter().map(|c| c[d]).sum::<f64>() / num_components as f64;
            for c in &mut components {
                c[d] -= mean;
            }
        }

        Ok(Self {
            profile,
            d_in,
            k,
            teacher,
            unit_teacher,
            components,
            _marker: std::marker::PhantomData,
        })
    }

    pub fn profile(&self) -> &HeterogeneityProfile {
        &self.profile
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// The hidden teacher matrix (k x d_in), cast to the working scalar.
    pub fn teacher(&self) -> Vec<Vec<F>> {
        self.teacher
            .iter()
            .map(|row| row.iter().map(|v| cast(*v)).collect())
            .collect()
    }

    /// Noise-free labels under the teacher sign rule.
    pub fn teacher_labels(&self, features: &[F]) -> Vec<u8> {
        self.teacher
            .iter()
            .map(|row| {
                let dot: f64 = row
                    .iter()
                    .zip(features)
                    .map(|(t, x)| t * x.to_f64().unwrap_or(f64::NAN))
                    .sum();
                u8::from(dot >= 0.0)
            })
            .collect()
    }

    /// Client `index`'s local dataset, with that client's mixture skew and
    /// label noise. Deterministic given the profile seed.
    pub fn client_records(&self, index: usize) -> Result<Vec<StudentRecord<F>>> {
        if index >= self.profile.num_clients {
            return Err(Error::InvalidConfig(format!(
                "client index {index} out of range (num_clients {})",
                self.profile.num_clients
            )));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(self.profile.seed);
        rng.set_stream(1 + index as u64);
        let weights = self.mixture_weights(&mut rng)?;
        self.draw_records(
            self.profile.sizes[index],
            &weights,
            self.profile.label_noise_rates[index],
            &format!("c{index:02}"),
            &mut rng,
        )
    }

    /// Public dataset (uniform mixture, no label noise) on the given RNG
    /// stream; use streams above `num_clients` to stay off the client draws.
    pub fn public_records(&self, n: usize, stream: u64) -> Result<Vec<StudentRecord<F>>> {
        let mut rng = ChaCha12Rng::seed_from_u64(self.profile.seed);
        rng.set_stream(stream);
        let uniform = vec![1.0 / self.components.len() as f64; self.components.len()];
        self.draw_records(n, &uniform, 0.0, &format!("pub{stream}"), &mut rng)
    }

    fn mixture_weights(&self, rng: &mut ChaCha12Rng) -> Result<Vec<f64>> {
        let m = self.components.len();
        if self.profile.label_skew.is_infinite() {
            return Ok(vec![1.0 / m as f64; m]);
        }
        // Dirichlet(alpha) via normalized Gamma(alpha, 1) draws.
        let gamma = Gamma::new(self.profile.label_skew, 1.0)
            .map_err(|e| Error::InvalidConfig(format!("bad Dirichlet concentration: {e}")))?;
        let mut draws: Vec<f64> = (0..m).map(|_| gamma.sample(rng)).collect();
        let mut total: f64 = draws.iter().sum();
        if total <= 0.0 {
            // All-zero draws are possible for tiny concentrations; fall back
            // to a single random component.
            let pick = rng.random_range(0..m);
            draws = vec![0.0; m];
            draws[pick] = 1.0;
            total = 1.0;
        }
        Ok(draws.into_iter().map(|g| g / total).collect())
    }

    fn draw_records(
        &self,
        n: usize,
        weights: &[f64],
        noise_rate: f64,
        id_prefix: &str,
        rng: &mut ChaCha12Rng,
    ) -> Result<Vec<StudentRecord<F>>> {
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let x = self.draw_features(weights, rng)?;
            let mut labels = Vec::with_capacity(self.k);
            for row in &self.teacher {
                let dot: f64 = row.iter().zip(&x).map(|(t, v)| t * v).sum();
                labels.push(u8::from(dot >= 0.0));
            }
            if noise_rate > 0.0 {
                for bit in &mut labels {
                    if rng.random::<f64>() < noise_rate {
                        *bit = 1 - *bit;
                    }
                }
            }
            out.push(StudentRecord {
                prompt_id: format!("{id_prefix}-{i:05}"),
                features: x.into_iter().map(cast).collect(),
                rubric_labels: labels,
            });
        }
        Ok(out)
    }

    fn draw_features(&self, weights: &[f64], rng: &mut ChaCha12Rng) -> Result<Vec<f64>> {
        for _ in 0..MAX_DRAWS_PER_RECORD {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut comp = self.components.len() - 1;
            for (c, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    comp = c;
                    break;
                }
            }
            let x: Vec<f64> = self.components[comp]
                .iter()
                .map(|m| {
                    let z: f64 = StandardNormal.sample(rng);
                    m + z
                })
                .collect();
            let margin = self
                .unit_teacher
                .iter()
                .map(|row| row.iter().zip(&x).map(|(t, v)| t * v).sum::<f64>().abs())
                .fold(f64::INFINITY, f64::min);
            if margin >= FEATURE_MARGIN {
                return Ok(x);
            }
        }
        Err(Error::InvalidConfig(
            "margin rejection sampling stalled; teacher/feature geometry too tight".into(),
        ))
    }
}

/// Per-client datasets plus the generator world (which hides the teacher).
pub fn generate_clients<F: Scalar>(
    profile: HeterogeneityProfile,
    schema: &RecordSchema,
) -> Result<(Vec<Vec<StudentRecord<F>>>, SyntheticWorld<F>)> {
    let world = SyntheticWorld::new(profile, schema)?;
    let clients = (0..world.profile.num_clients)
        .map(|i| world.client_records(i))
        .collect::<Result<Vec<_>>>()?;
    Ok((clients, world))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema(d_in: usize, k: usize) -> RecordSchema {
        RecordSchema::for_student_records("v1", d_in, k)
    }

    #[test]
    fn noiseless_labels_match_teacher_rule() {
        let profile = HeterogeneityProfile::iid(1, 200, 11);
        let (clients, world) = generate_clients::<f64>(profile, &schema(8, 3)).unwrap();
        for rec in &clients[0] {
            assert_eq!(rec.rubric_labels, world.teacher_labels(&rec.features));
        }
    }

    #[test]
    fn half_noise_agreement_near_half() {
        let profile = HeterogeneityProfile {
            num_clients: 1,
            sizes: vec![6000],
            label_skew: f64::INFINITY,
            label_noise_rates: vec![0.5],
            seed: 5,
        };
        let (clients, world) = generate_clients::<f64>(profile, &schema(8, 2)).unwrap();
        let mut agree = 0usize;
        let mut total = 0usize;
        for rec in &clients[0] {
            let clean = world.teacher_labels(&rec.features);
            for (a, b) in clean.iter().zip(&rec.rubric_labels) {
                agree += usize::from(a == b);
                total += 1;
            }
        }
        let rate = agree as f64 / total as f64;
        assert!((rate - 0.5).abs() < 0.02, "agreement {rate}");
    }

    #[test]
    fn same_seed_same_datasets() {
        let profile = HeterogeneityProfile {
            num_clients: 3,
            sizes: vec![50, 80, 20],
            label_skew: 0.5,
            label_noise_rates: vec![0.0, 0.2, 0.4],
            seed: 42,
        };
        let (a, _) = generate_clients::<f64>(profile.clone(), &schema(6, 4)).unwrap();
        let (b, _) = generate_clients::<f64>(profile, &schema(6, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn different_seed_differs() {
        let a = generate_clients::<f64>(HeterogeneityProfile::iid(1, 30, 1), &schema(4, 2))
            .unwrap()
            .0;
        let b = generate_clients::<f64>(HeterogeneityProfile::iid(1, 30, 2), &schema(4, 2))
            .unwrap()
            .0;
        assert_ne!(a, b);
    }

    #[test]
    fn client_records_independent_of_generation_order() {
        let profile = HeterogeneityProfile {
            num_clients: 3,
            sizes: vec![40, 40, 40],
            label_skew: 0.7,
            label_noise_rates: vec![0.1, 0.0, 0.3],
            seed: 9,
        };
        let world = SyntheticWorld::<f64>::new(profile, &schema(5, 2)).unwrap();
        let c2_first = world.client_records(2).unwrap();
        let _ = world.client_records(0).unwrap();
        let c2_again = world.client_records(2).unwrap();
        assert_eq!(c2_first, c2_again);
    }

    #[test]
    fn margin_is_respected() {
        let profile = HeterogeneityProfile::iid(2, 100, 3);
        let (clients, world) = generate_clients::<f64>(profile, &schema(8, 3)).unwrap();
        for rec in clients.iter().flatten() {
            for row in &world.unit_teacher {
                let dot: f64 = row.iter().zip(&rec.features).map(|(t, x)| t * x).sum();
                assert!(dot.abs() >= FEATURE_MARGIN - 1e-12);
            }
        }
    }

    #[test]
    fn generated_records_pass_their_schema() {
        let sch = schema(8, 3);
        let profile = HeterogeneityProfile::iid(2, 50, 7);
        let (clients, _) = generate_clients::<f64>(profile, &sch).unwrap();
        for rec in clients.iter().flatten() {
            assert!(super::super::validate_record(rec, &sch).is_empty());
        }
    }

    #[test]
    fn profile_validation() {
        let mut p = HeterogeneityProfile::iid(2, 10, 0);
        p.sizes = vec![10];
        assert!(p.validate().is_err());
        let mut p2 = HeterogeneityProfile::iid(2, 10, 0);
        p2.label_noise_rates = vec![0.6, 0.0];
        assert!(p2.validate().is_err());
        let mut p3 = HeterogeneityProfile::iid(2, 10, 0);
        p3.label_skew = 0.0;
        assert!(p3.validate().is_err());
    }

    #[test]
    fn public_records_are_noiseless_and_uniform_stream() {
        let profile = HeterogeneityProfile {
            num_clients: 2,
            sizes: vec![10, 10],
            label_skew: 0.3,
            label_noise_rates: vec![0.4, 0.4],
            seed: 21,
        };
        let world = SyntheticWorld::<f64>::new(profile, &schema(6, 2)).unwrap();
        let test = world.public_records(100, 10).unwrap();
        for rec in &test {
            assert_eq!(rec.rubric_labels, world.teacher_labels(&rec.features));
        }
        let again = world.public_records(100, 10).unwrap();
        assert_eq!(test, again);
        let other_stream = world.public_records(100, 11).unwrap();
        assert_ne!(test, other_stream);
    }
}
