//! Risk-factor and morphometry schema.
//!
//! The 48 risk-factor variables are grouped as demographic (5), general
//! health (11), risk factors (6), physical activity (6), social and leisure
//! (2) and dietary (18). Each variable carries a CSV column name, the
//! placeholder it fills in the clinical report template, and its value
//! domain. Categorical values are stored as level codes.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldGroup {
    Demographic,
    GeneralHealth,
    RiskFactors,
    PhysicalActivity,
    SocialLeisure,
    Dietary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FieldKind {
    /// Real-valued with an inclusive plausible range; values are stored
    /// rounded to `decimals` places.
    Numeric { min: f64, max: f64, decimals: usize },
    /// Ordered categorical levels; the stored code indexes `levels`.
    Categorical { levels: &'static [&'static str] },
}

impl FieldKind {
    pub fn is_categorical(&self) -> bool {
        matches!(self, FieldKind::Categorical { .. })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FieldSpec {
    pub field: RiskFactor,
    pub column: &'static str,
    pub placeholder: &'static str,
    pub group: FieldGroup,
    pub kind: FieldKind,
}

macro_rules! risk_factors {
    ($( $variant:ident => $column:literal, $placeholder:literal, $group:ident, $kind:expr; )*) => {
        /// One risk-factor variable.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum RiskFactor {
            $($variant,)*
        }

        impl RiskFactor {
            pub const ALL: [RiskFactor; RISK_FACTOR_COUNT] = [$(RiskFactor::$variant,)*];

            pub fn spec(self) -> FieldSpec {
                match self {
                    $(RiskFactor::$variant => FieldSpec {
                        field: RiskFactor::$variant,
                        column: $column,
                        placeholder: $placeholder,
                        group: FieldGroup::$group,
                        kind: $kind,
                    },)*
                }
            }
        }
    };
}

pub const RISK_FACTOR_COUNT: usize = 48;

const fn num(min: f64, max: f64, decimals: usize) -> FieldKind {
    FieldKind::Numeric { min, max, decimals }
}

const fn cat(levels: &'static [&'static str]) -> FieldKind {
    FieldKind::Categorical { levels }
}

const FOOD_FREQUENCY: &[&str] = &[
    "never",
    "less than once a week",
    "once a week",
    "2-4 times a week",
    "5-6 times a week",
    "once or more daily",
];

risk_factors! {
    // demographic
    Age => "Age", "age", Demographic, num(40.0, 75.0, 0);
    Sex => "Sex", "sex", Demographic, cat(&["female", "male"]);
    EconomicStatus => "EconomicStatus", "economic status", Demographic, cat(&[
        "0 and 17,999 pounds",
        "18,000 and 30,999 pounds",
        "31,000 and 51,999 pounds",
        "52,000 and 100,000 pounds",
        "100,001 pounds and above",
    ]);
    EthnicBackground => "EthnicBackground", "ethnic background", Demographic, cat(&[
        "British", "Irish", "White", "Mixed", "Indian", "Pakistani", "Caribbean", "African", "Chinese",
    ]);
    EmploymentStatus => "EmploymentStatus", "employment status", Demographic, cat(&[
        "paid employment", "retirement", "home care duties", "unemployment", "full-time education",
    ]);
    // general health
    Bmi => "BMI", "BMI", GeneralHealth, num(14.0, 60.0, 1);
    HbA1c => "HbA1C", "HbA1C", GeneralHealth, num(15.0, 150.0, 1);
    Hdl => "HDL", "HDL", GeneralHealth, num(0.3, 4.0, 2);
    SystolicBp => "SystolicBP", "systolic blood pressure", GeneralHealth, num(80.0, 220.0, 0);
    DiastolicBp => "DiastolicBP", "diastolic blood pressure", GeneralHealth, num(40.0, 130.0, 0);
    NumericMemory => "NumericMemory", "numeric memory", GeneralHealth, num(2.0, 12.0, 0);
    FluidIntelligence => "FluidIntelligence", "fluid intelligence", GeneralHealth, num(0.0, 13.0, 0);
    TrailADuration => "TrailADuration", "trail-making test A duration", GeneralHealth, num(100.0, 1500.0, 0);
    TrailAErrors => "TrailAErrors", "trail-making test A error counts", GeneralHealth, num(0.0, 30.0, 0);
    TrailBDuration => "TrailBDuration", "trail-making test B duration", GeneralHealth, num(200.0, 3000.0, 0);
    TrailBErrors => "TrailBErrors", "trail-making test B error counts", GeneralHealth, num(0.0, 30.0, 0);
    // risk factors
    Depression => "Depression", "depression", RiskFactors, cat(&[
        "no history of depression", "a history of depression",
    ]);
    SleepDeprivation => "SleepDeprivation", "sleep deprivation", RiskFactors, cat(&[
        "never or rarely", "sometimes", "usually",
    ]);
    AlcoholUse => "AlcoholUse", "alcohol use", RiskFactors, cat(&[
        "never",
        "on special occasions only",
        "one to three times a month",
        "once or twice a week",
        "three or four times a week",
        "daily or almost daily",
    ]);
    SmokingHistory => "SmokingHistory", "smoking history", RiskFactors, cat(&[
        "a never smoker", "a previous smoker", "a current smoker",
    ]);
    CannabisUse => "CannabisUse", "cannabis use", RiskFactors, cat(&[
        "zero", "one or two", "three to ten", "eleven to one hundred", "more than one hundred",
    ]);
    CannabisInitiationAge => "CannabisInitiationAge", "age of cannabis initiation", RiskFactors, num(10.0, 60.0, 0);
    // physical activity
    WalkDays => "WalkDays", "number of days/week of walked 10+ minutes", PhysicalActivity, num(0.0, 7.0, 0);
    WalkDuration => "WalkDuration", "duration of walked 10+ minutes", PhysicalActivity, num(0.0, 600.0, 0);
    ModerateDays => "ModerateDays", "number of days/week of moderate activity", PhysicalActivity, num(0.0, 7.0, 0);
    ModerateDuration => "ModerateDuration", "duration of moderate activity", PhysicalActivity, num(0.0, 600.0, 0);
    VigorousDays => "VigorousDays", "number of days/week of vigorous activity", PhysicalActivity, num(0.0, 7.0, 0);
    VigorousDuration => "VigorousDuration", "duration of vigorous exercise", PhysicalActivity, num(0.0, 600.0, 0);
    // social and leisure
    FamilyVisitFrequency => "FamilyVisitFrequency", "frequency of family visit", SocialLeisure, cat(&[
        "almost daily",
        "two to four times a week",
        "about once a week",
        "about once a month",
        "once every few months",
        "never or almost never",
    ]);
    LeisureActivities => "LeisureActivities", "number of leisure activity", SocialLeisure, num(0.0, 5.0, 0);
    // dietary
    CookedVegetableIntake => "CookedVegetableIntake", "cooked vegetable intake", Dietary, num(0.0, 20.0, 0);
    RawVegetableIntake => "RawVegetableIntake", "raw vegetable intake", Dietary, num(0.0, 20.0, 0);
    FreshFruitIntake => "FreshFruitIntake", "fresh fruit intake", Dietary, num(0.0, 15.0, 0);
    DriedFruitIntake => "DriedFruitIntake", "dried fruit intake", Dietary, num(0.0, 15.0, 0);
    OilyFishIntake => "OilyFishIntake", "oily fish intake", Dietary, cat(FOOD_FREQUENCY);
    NonOilyFishIntake => "NonOilyFishIntake", "non oily fish intake", Dietary, cat(FOOD_FREQUENCY);
    ProcessedMeatIntake => "ProcessedMeatIntake", "processed meat intake", Dietary, cat(FOOD_FREQUENCY);
    PoultryIntake => "PoultryIntake", "poultry intake", Dietary, cat(FOOD_FREQUENCY);
    BeefIntake => "BeefIntake", "beef intake", Dietary, cat(FOOD_FREQUENCY);
    LambIntake => "LambIntake", "lamb intake", Dietary, cat(FOOD_FREQUENCY);
    PorkIntake => "PorkIntake", "pork intake", Dietary, cat(FOOD_FREQUENCY);
    MilkType => "MilkType", "milk type", Dietary, cat(&[
        "full cream milk", "semi-skimmed milk", "skimmed milk", "soya milk", "other milk", "no milk",
    ]);
    SpreadType => "SpreadType", "spread type", Dietary, cat(&[
        "butter", "flora spread", "other spread", "no spread",
    ]);
    BreadIntake => "BreadIntake", "bread intake", Dietary, num(0.0, 70.0, 0);
    SaltAddedToFood => "SaltAddedToFood", "salt added to food", Dietary, cat(&[
        "never or rarely any salt", "salt sometimes", "salt usually", "salt always",
    ]);
    TeaIntake => "TeaIntake", "tea intake", Dietary, num(0.0, 20.0, 0);
    CoffeeIntake => "CoffeeIntake", "coffee intake", Dietary, num(0.0, 20.0, 0);
    WaterIntake => "WaterIntake", "water intake", Dietary, num(0.0, 20.0, 0);
}

impl RiskFactor {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn column(self) -> &'static str {
        self.spec().column
    }

    pub fn kind(self) -> FieldKind {
        self.spec().kind
    }

    pub fn from_column(name: &str) -> Option<RiskFactor> {
        RiskFactor::ALL.iter().copied().find(|f| f.column() == name)
    }
}

/// A single risk-factor cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Missing,
    Numeric(f64),
    Code(u8),
}

impl Value {
    pub fn is_missing(&self) -> bool {
        matches!(self, Value::Missing)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Numeric(v) => Some(v),
            Value::Code(c) => Some(f64::from(c)),
            Value::Missing => None,
        }
    }
}

/// One participant's structured risk factors, indexed by [`RiskFactor`].
#[derive(Debug, Clone, PartialEq)]
pub struct RiskFactorProfile {
    values: [Value; RISK_FACTOR_COUNT],
}

impl Default for RiskFactorProfile {
    fn default() -> Self {
        RiskFactorProfile {
            values: [Value::Missing; RISK_FACTOR_COUNT],
        }
    }
}

impl RiskFactorProfile {
    pub fn get(&self, field: RiskFactor) -> Value {
        self.values[field.index()]
    }

    pub fn set(&mut self, field: RiskFactor, value: Value) {
        self.values[field.index()] = value;
    }

    pub fn iter(&self) -> impl Iterator<Item = (RiskFactor, Value)> + '_ {
        RiskFactor::ALL.iter().map(move |&f| (f, self.values[f.index()]))
    }

    /// Checks every present value against its field's domain.
    pub fn validate(&self) -> Result<(), String> {
        for (field, value) in self.iter() {
            match (field.kind(), value) {
                (_, Value::Missing) => {}
                (FieldKind::Numeric { min, max, .. }, Value::Numeric(v)) => {
                    if !(v.is_finite() && v >= min && v <= max) {
                        return Err(format!("{} = {v} outside [{min}, {max}]", field.column()));
                    }
                }
                (FieldKind::Categorical { levels }, Value::Code(c)) => {
                    if usize::from(c) >= levels.len() {
                        return Err(format!("{} code {c} has no level", field.column()));
                    }
                }
                _ => return Err(format!("{} has a value of the wrong kind", field.column())),
            }
        }
        Ok(())
    }
}

/// Number of retinal morphometric features.
pub const MORPHOMETRY_DIM: usize = 17;

/// Morphometry column names: two cup-to-disc ratios followed by five vascular
/// measures for artery, vein and both vessel types combined.
pub const MORPHOMETRY_COLUMNS: [&str; MORPHOMETRY_DIM] = [
    "VerticalCupToDisc",
    "HorizontalCupToDisc",
    "FractalDimensionArtery",
    "FractalDensityArtery",
    "DistanceTortuosityArtery",
    "SquaredCurvatureTortuosityArtery",
    "TortuosityDensityArtery",
    "FractalDimensionVein",
    "FractalDensityVein",
    "DistanceTortuosityVein",
    "SquaredCurvatureTortuosityVein",
    "TortuosityDensityVein",
    "FractalDimensionCombined",
    "FractalDensityCombined",
    "DistanceTortuosityCombined",
    "SquaredCurvatureTortuosityCombined",
    "TortuosityDensityCombined",
];

/// K = 17 retinal morphometric measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MorphometryVector(pub [f64; MORPHOMETRY_DIM]);

impl MorphometryVector {
    pub fn validate(&self) -> Result<(), String> {
        for (k, &v) in self.0.iter().enumerate() {
            let ok = if k < 2 {
                v > 0.0 && v <= 1.0
            } else {
                v.is_finite() && v > 0.0
            };
            if !ok {
                return Err(format!("{} = {v} out of range", MORPHOMETRY_COLUMNS[k]));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IncidentLabel {
    Control,
    Case,
}

impl IncidentLabel {
    pub fn is_case(self) -> bool {
        self == IncidentLabel::Case
    }
}

/// One participant.
#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub profile: RiskFactorProfile,
    pub morphometry: MorphometryVector,
    pub image_proxy: Vec<f64>,
    pub incident_label: IncidentLabel,
    /// Present exactly when the subject is a case.
    pub years_to_onset: Option<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn group_sizes_match_variable_list() {
        let count = |g: FieldGroup| RiskFactor::ALL.iter().filter(|f| f.spec().group == g).count();
        assert_eq!(count(FieldGroup::Demographic), 5);
        assert_eq!(count(FieldGroup::GeneralHealth), 11);
        assert_eq!(count(FieldGroup::RiskFactors), 6);
        assert_eq!(count(FieldGroup::PhysicalActivity), 6);
        assert_eq!(count(FieldGroup::SocialLeisure), 2);
        assert_eq!(count(FieldGroup::Dietary), 18);
    }

    #[test]
    fn names_are_unique_and_indices_line_up() {
        let columns: HashSet<_> = RiskFactor::ALL.iter().map(|f| f.column()).collect();
        let placeholders: HashSet<_> = RiskFactor::ALL.iter().map(|f| f.spec().placeholder).collect();
        assert_eq!(columns.len(), RISK_FACTOR_COUNT);
        assert_eq!(placeholders.len(), RISK_FACTOR_COUNT);
        for (i, f) in RiskFactor::ALL.iter().enumerate() {
            assert_eq!(f.index(), i);
            assert_eq!(RiskFactor::from_column(f.column()), Some(*f));
        }
    }

    #[test]
    fn plausible_ranges() {
        assert!(matches!(RiskFactor::Age.kind(), FieldKind::Numeric { min, max, .. } if min == 40.0 && max == 75.0));
        assert!(matches!(RiskFactor::Bmi.kind(), FieldKind::Numeric { min, max, .. } if min == 14.0 && max == 60.0));
        let mut p = RiskFactorProfile::default();
        assert!(p.validate().is_ok());
        p.set(RiskFactor::Age, Value::Numeric(80.0));
        assert!(p.validate().is_err());
        p.set(RiskFactor::Age, Value::Numeric(60.0));
        p.set(RiskFactor::Sex, Value::Code(2));
        assert!(p.validate().is_err());
    }

    #[test]
    fn morphometry_bounds() {
        let mut m = MorphometryVector([1.0; MORPHOMETRY_DIM]);
        assert!(m.validate().is_ok());
        m.0[0] = 1.2;
        assert!(m.validate().is_err());
        m.0[0] = 0.5;
        m.0[9] = -0.1;
        assert!(m.validate().is_err());
    }
}
