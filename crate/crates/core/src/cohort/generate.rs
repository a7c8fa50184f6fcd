//! Synthetic cohort generator.
//!
//! Every subject draws a scalar latent risk `z ~ N(0, 1)`. The latent shifts
//! the morphometry vector, a configurable subset of risk-factor fields, and
//! the liability that decides the incident label; the image proxy is a fixed
//! random affine map of the morphometry plus noise and nuisance dimensions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use super::schema::{
    FieldKind, IncidentLabel, MorphometryVector, RiskFactor, RiskFactorProfile, Subject, Value, MORPHOMETRY_DIM,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CohortConfig {
    pub n_subjects: usize,
    /// Fraction of cases in the generated cohort.
    pub prevalence: f64,
    /// Loading of the latent risk on every signal-carrying variable, in [0, 1].
    pub signal_strength: f64,
    pub morphometry_noise: f64,
    pub risk_noise: f64,
    pub image_noise: f64,
    pub label_noise: f64,
    /// Width of the affine part of the image proxy.
    pub image_dim: usize,
    /// Pure-noise dimensions appended to the image proxy.
    pub nuisance_dims: usize,
    pub missing_rate: f64,
    pub signal_fields: Vec<RiskFactor>,
    pub onset_range: (f64, f64),
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n_subjects: 2400,
            prevalence: 0.05,
            signal_strength: 0.9,
            morphometry_noise: 0.5,
            risk_noise: 1.0,
            image_noise: 3.0,
            label_noise: 0.5,
            image_dim: 24,
            nuisance_dims: 8,
            missing_rate: 0.02,
            signal_fields: default_signal_fields(),
            onset_range: (1.5, 11.58),
            seed: 0,
        }
    }
}

pub fn default_signal_fields() -> Vec<RiskFactor> {
    use RiskFactor::*;
    vec![
        EconomicStatus,
        Bmi,
        HbA1c,
        Hdl,
        SystolicBp,
        NumericMemory,
        FluidIntelligence,
        TrailADuration,
        TrailBDuration,
        TrailBErrors,
        Depression,
        SleepDeprivation,
        SmokingHistory,
        WalkDays,
        ModerateDays,
        VigorousDays,
        FamilyVisitFrequency,
        LeisureActivities,
        FreshFruitIntake,
        OilyFishIntake,
        ProcessedMeatIntake,
        SaltAddedToFood,
    ]
}

impl CohortConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_subjects < 10 {
            return fail(format!("n_subjects must be at least 10, got {}", self.n_subjects));
        }
        if !(self.prevalence > 0.0 && self.prevalence < 0.5) {
            return fail(format!("prevalence must lie in (0, 0.5), got {}", self.prevalence));
        }
        if !(0.0..=1.0).contains(&self.signal_strength) {
            return fail(format!(
                "signal_strength must lie in [0, 1], got {}",
                self.signal_strength
            ));
        }
        for (name, v) in [
            ("risk_noise", self.risk_noise),
            ("image_noise", self.image_noise),
            ("label_noise", self.label_noise),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return fail(format!("{name} must be finite and nonnegative, got {v}"));
            }
        }
        if !(self.morphometry_noise.is_finite() && self.morphometry_noise > 0.0) {
            return fail(format!(
                "morphometry_noise must be positive, got {}",
                self.morphometry_noise
            ));
        }
        if self.image_dim == 0 {
            return fail("image_dim must be positive".into());
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return fail(format!("missing_rate must lie in [0, 1), got {}", self.missing_rate));
        }
        let (lo, hi) = self.onset_range;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return fail(format!("onset_range ({lo}, {hi}) is not a valid interval"));
        }
        Ok(())
    }

    pub fn image_proxy_width(&self) -> usize {
        self.image_dim + self.nuisance_dims
    }
}

/// Sampling parameters for one risk-factor field.
enum FieldModel {
    Normal { mean: f64, sd: f64 },
    Levels(&'static [f64]),
}

/// Generation model per field and the direction in which higher latent risk
/// moves it.
fn field_model(field: RiskFactor) -> (FieldModel, f64) {
    use FieldModel::{Levels, Normal};
    use RiskFactor::*;
    const FISH: &[f64] = &[0.1, 0.3, 0.35, 0.2, 0.04, 0.01];
    const MEAT: &[f64] = &[0.1, 0.3, 0.3, 0.25, 0.04, 0.01];
    match field {
        Age => (Normal { mean: 64.0, sd: 4.0 }, 0.0),
        Sex => (Levels(&[0.48, 0.52]), 0.0),
        EconomicStatus => (Levels(&[0.2, 0.25, 0.25, 0.2, 0.1]), -1.0),
        EthnicBackground => (Levels(&[0.88, 0.03, 0.03, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01]), 0.0),
        EmploymentStatus => (Levels(&[0.5, 0.4, 0.04, 0.04, 0.02]), 0.0),
        Bmi => (Normal { mean: 27.4, sd: 4.5 }, 1.0),
        HbA1c => (Normal { mean: 36.0, sd: 6.0 }, 1.0),
        Hdl => (Normal { mean: 1.45, sd: 0.38 }, -1.0),
        SystolicBp => (Normal { mean: 138.0, sd: 18.0 }, 1.0),
        DiastolicBp => (Normal { mean: 82.0, sd: 10.0 }, 1.0),
        NumericMemory => (Normal { mean: 6.7, sd: 1.3 }, -1.0),
        FluidIntelligence => (Normal { mean: 6.0, sd: 2.0 }, -1.0),
        TrailADuration => (Normal { mean: 400.0, sd: 110.0 }, 1.0),
        TrailAErrors => (Normal { mean: 0.5, sd: 1.0 }, 1.0),
        TrailBDuration => (Normal { mean: 650.0, sd: 200.0 }, 1.0),
        TrailBErrors => (Normal { mean: 1.0, sd: 1.5 }, 1.0),
        Depression => (Levels(&[0.9, 0.1]), 1.0),
        SleepDeprivation => (Levels(&[0.3, 0.45, 0.25]), 1.0),
        AlcoholUse => (Levels(&[0.08, 0.1, 0.12, 0.25, 0.25, 0.2]), 1.0),
        SmokingHistory => (Levels(&[0.55, 0.35, 0.1]), 1.0),
        CannabisUse => (Levels(&[0.78, 0.1, 0.06, 0.04, 0.02]), 0.0),
        CannabisInitiationAge => (Normal { mean: 19.0, sd: 4.0 }, 0.0),
        WalkDays => (Normal { mean: 5.0, sd: 2.0 }, -1.0),
        WalkDuration => (Normal { mean: 45.0, sd: 30.0 }, -1.0),
        ModerateDays => (Normal { mean: 3.5, sd: 2.2 }, -1.0),
        ModerateDuration => (Normal { mean: 40.0, sd: 30.0 }, -1.0),
        VigorousDays => (Normal { mean: 2.0, sd: 1.8 }, -1.0),
        VigorousDuration => (Normal { mean: 30.0, sd: 25.0 }, -1.0),
        FamilyVisitFrequency => (Levels(&[0.15, 0.3, 0.3, 0.15, 0.07, 0.03]), 1.0),
        LeisureActivities => (Normal { mean: 1.5, sd: 1.0 }, -1.0),
        CookedVegetableIntake => (Normal { mean: 3.0, sd: 2.0 }, -1.0),
        RawVegetableIntake => (Normal { mean: 2.5, sd: 2.0 }, -1.0),
        FreshFruitIntake => (Normal { mean: 3.0, sd: 2.5 }, -1.0),
        DriedFruitIntake => (Normal { mean: 1.0, sd: 1.2 }, 0.0),
        OilyFishIntake => (Levels(FISH), -1.0),
        NonOilyFishIntake => (Levels(&[0.05, 0.3, 0.4, 0.2, 0.04, 0.01]), -1.0),
        ProcessedMeatIntake => (Levels(MEAT), 1.0),
        PoultryIntake => (Levels(MEAT), 0.0),
        BeefIntake => (Levels(MEAT), 1.0),
        LambIntake => (Levels(FISH), 0.0),
        PorkIntake => (Levels(FISH), 0.0),
        MilkType => (Levels(&[0.1, 0.65, 0.15, 0.05, 0.02, 0.03]), 0.0),
        SpreadType => (Levels(&[0.4, 0.2, 0.3, 0.1]), 0.0),
        BreadIntake => (Normal { mean: 14.0, sd: 8.0 }, 0.0),
        SaltAddedToFood => (Levels(&[0.55, 0.28, 0.12, 0.05]), 1.0),
        TeaIntake => (Normal { mean: 3.5, sd: 2.5 }, 0.0),
        CoffeeIntake => (Normal { mean: 2.0, sd: 2.0 }, 0.0),
        WaterIntake => (Normal { mean: 3.0, sd: 2.0 }, -1.0),
    }
}

/// Population mean, spread and latent direction per morphometric feature.
const MORPHOMETRY_MODEL: [(f64, f64, f64); MORPHOMETRY_DIM] = [
    (0.40, 0.12, 1.0),
    (0.38, 0.11, 1.0),
    (1.45, 0.03, -1.0),
    (0.060, 0.008, -1.0),
    (1.08, 0.02, 1.0),
    (8.0, 2.0, 1.0),
    (0.70, 0.05, 1.0),
    (1.42, 0.03, -1.0),
    (0.055, 0.008, -1.0),
    (1.07, 0.02, 1.0),
    (7.0, 1.8, 1.0),
    (0.68, 0.05, 1.0),
    (1.48, 0.03, -1.0),
    (0.080, 0.010, -1.0),
    (1.075, 0.02, 1.0),
    (7.5, 1.9, 1.0),
    (0.69, 0.05, 1.0),
];

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + erf(x / std::f64::consts::SQRT_2))
}

fn round_to(v: f64, decimals: usize) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (v * scale).round() / scale
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws a synthetic cohort. Deterministic in `config` (including its seed).
pub fn generate_cohort(config: &CohortConfig) -> Result<Vec<Subject>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let rho = config.signal_strength;

    let loadings: Vec<f64> = MORPHOMETRY_MODEL
        .iter()
        .map(|&(_, _, dir)| dir * rng.random_range(0.5..1.0))
        .collect();
    let mixing: Vec<f64> = (0..config.image_dim * MORPHOMETRY_DIM)
        .map(|_| normal(&mut rng) / (MORPHOMETRY_DIM as f64).sqrt())
        .collect();
    let offset: Vec<f64> = (0..config.image_dim).map(|_| 0.5 * normal(&mut rng)).collect();

    let n = config.n_subjects;
    let mut subjects = Vec::with_capacity(n);
    let mut liabilities = Vec::with_capacity(n);
    for i in 0..n {
        let z = normal(&mut rng);

        let mut profile = RiskFactorProfile::default();
        for field in RiskFactor::ALL {
            let (model, direction) = field_model(field);
            let coef = if config.signal_fields.contains(&field) {
                rho * direction
            } else {
                0.0
            };
            // keep the marginal standard normal whatever the loading
            let scale = (coef * coef + config.risk_noise * config.risk_noise).sqrt();
            let e = normal(&mut rng);
            let u = if scale > 0.0 {
                (coef * z + config.risk_noise * e) / scale
            } else {
                0.0
            };
            let value = match (model, field.kind()) {
                (FieldModel::Normal { mean, sd }, FieldKind::Numeric { min, max, decimals }) => {
                    Value::Numeric(round_to((mean + sd * u).clamp(min, max), decimals))
                }
                (FieldModel::Levels(probs), FieldKind::Categorical { levels }) => {
                    debug_assert_eq!(probs.len(), levels.len());
                    let p = std_normal_cdf(u);
                    let mut acc = 0.0;
                    let mut code = probs.len() - 1;
                    for (k, &pk) in probs.iter().enumerate() {
                        acc += pk;
                        if p < acc {
                            code = k;
                            break;
                        }
                    }
                    Value::Code(code as u8)
                }
                _ => unreachable!("generator model disagrees with schema for {field:?}"),
            };
            let missing_allowed = !matches!(field, RiskFactor::Age | RiskFactor::Sex);
            let dropped = rng.random::<f64>() < config.missing_rate;
            profile.set(
                field,
                if missing_allowed && dropped {
                    Value::Missing
                } else {
                    value
                },
            );
        }
        if profile.get(RiskFactor::CannabisUse) == Value::Code(0) {
            profile.set(RiskFactor::CannabisInitiationAge, Value::Missing);
        }

        let mut morph = [0.0; MORPHOMETRY_DIM];
        let mut standardized = [0.0; MORPHOMETRY_DIM];
        for (k, &(mean, sd, _)) in MORPHOMETRY_MODEL.iter().enumerate() {
            let w = loadings[k];
            let s = config.morphometry_noise;
            let u = (rho * w * z + s * normal(&mut rng)) / (rho * rho * w * w + s * s).sqrt();
            let lower = if k < 2 { 0.01 } else { 1e-4 };
            let upper = if k < 2 { 1.0 } else { f64::INFINITY };
            morph[k] = (mean + sd * u).clamp(lower, upper);
            standardized[k] = (morph[k] - mean) / sd;
        }

        let mut image_proxy = Vec::with_capacity(config.image_proxy_width());
        for r in 0..config.image_dim {
            let row = &mixing[r * MORPHOMETRY_DIM..(r + 1) * MORPHOMETRY_DIM];
            let signal: f64 = row.iter().zip(&standardized).map(|(a, m)| a * m).sum();
            image_proxy.push(offset[r] + signal + config.image_noise * normal(&mut rng));
        }
        for _ in 0..config.nuisance_dims {
            image_proxy.push(normal(&mut rng));
        }

        liabilities.push(z + config.label_noise * normal(&mut rng));
        subjects.push(Subject {
            id: format!("S{i:05}"),
            profile,
            morphometry: MorphometryVector(morph),
            image_proxy,
            incident_label: IncidentLabel::Control,
            years_to_onset: None,
        });
    }

    let n_cases = ((config.prevalence * n as f64).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| liabilities[b].total_cmp(&liabilities[a]).then(a.cmp(&b)));
    let (lo, hi) = config.onset_range;
    for &i in &order[..n_cases] {
        let onset = (8.68 + 2.0 * normal(&mut rng)).clamp(lo, hi);
        subjects[i].incident_label = IncidentLabel::Case;
        subjects[i].years_to_onset = Some(round_to(onset, 2).clamp(lo, hi));
    }
    Ok(subjects)
}
