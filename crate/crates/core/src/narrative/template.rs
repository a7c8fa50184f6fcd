//! Clinical report template and rendering.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::cohort::{FieldKind, RiskFactor, RiskFactorProfile, Subject, Value};

/// The report template. Each `<placeholder>` names one risk-factor field.
pub const REPORT_TEMPLATE: &str = "The subject is <age> years old <ethnic background> <sex>. \
The average total household of this subject is in between <economic status>. \
The subject has <HbA1C> HbA1C, <HDL> HDL, <BMI> BMI, <systolic blood pressure> systolic blood pressure, \
<diastolic blood pressure> diastolic blood pressure. \
For lifestyle, the subject is in <employment status>. \
The subject is <smoking history>, has <depression>, \
has sleep deprivation <sleep deprivation>, and drinks alcohol <alcohol use>. \
The subject had his first cannabis at age <age of cannabis initiation> and used cannabis <cannabis use> times. \
The subject visits family <frequency of family visit>, and <number of leisure activity>. \
For physical activity, the subject walks <duration of walked 10+ minutes> minutes \
<number of days/week of walked 10+ minutes> days per week, \
exercises moderately <duration of moderate activity> minutes for <number of days/week of moderate activity> days a week, \
and exercises vigorously <duration of vigorous exercise> minutes for <number of days/week of vigorous activity> days a week. \
For diet, the subject has <cooked vegetable intake> tablespoons of cooked vegetables, \
<raw vegetable intake> tablespoons of raw vegetables, <fresh fruit intake> tablespoons of fresh fruit, \
and <dried fruit intake> dried fruit. \
In addition, the subject has oily fish <oily fish intake>, non-oily fish <non oily fish intake>, \
processed meat <processed meat intake>, poultry <poultry intake>, beef <beef intake>, lamb <lamb intake>, \
and pork <pork intake>. \
The subject has <bread intake> slices of bread per week, with <spread type>. \
The subject drinks <milk type>, <tea intake> cups of tea, <coffee intake> cups of coffee, \
<water intake> cups of water per day. \
The subject puts <salt added to food> in his diet. \
For cognitive function, the subject remembered <numeric memory> digits in the numeric memory test, \
scored <fluid intelligence> in a fluid intelligence test, \
completed trail #1 in <trail-making test A duration> deciseconds with <trail-making test A error counts> errors, \
and completed trail #2 in <trail-making test B duration> deciseconds with <trail-making test B error counts> errors.";

/// Replacement for an unavailable cannabis initiation age.
pub const CANNABIS_AGE_FALLBACK: &str = "No cannabis use was reported at that age";

/// Replacement for any other unavailable field.
pub const MISSING_FALLBACK: &str = "not reported";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Literal(&'static str),
    Slot(RiskFactor),
}

/// The template split into literal text and field slots.
pub fn segments() -> &'static [Segment] {
    static SEGMENTS: OnceLock<Vec<Segment>> = OnceLock::new();
    SEGMENTS.get_or_init(|| {
        let mut out = Vec::new();
        let mut rest = REPORT_TEMPLATE;
        while let Some(open) = rest.find('<') {
            let close = open + rest[open..].find('>').expect("unterminated placeholder");
            if open > 0 {
                out.push(Segment::Literal(&rest[..open]));
            }
            let name = &rest[open + 1..close];
            let field = RiskFactor::ALL
                .iter()
                .copied()
                .find(|f| f.spec().placeholder == name)
                .unwrap_or_else(|| panic!("template placeholder <{name}> has no field"));
            out.push(Segment::Slot(field));
            rest = &rest[close + 1..];
        }
        if !rest.is_empty() {
            out.push(Segment::Literal(rest));
        }
        out
    })
}

/// Text substituted for one field.
pub fn render_value(field: RiskFactor, value: Value) -> String {
    match (value, field.kind()) {
        (Value::Missing, _) if field == RiskFactor::CannabisInitiationAge => CANNABIS_AGE_FALLBACK.to_string(),
        (Value::Missing, _) => MISSING_FALLBACK.to_string(),
        (Value::Numeric(v), FieldKind::Numeric { decimals, .. }) => {
            let text = format!("{v:.decimals$}");
            if field == RiskFactor::LeisureActivities {
                format!("{text} leisure activities")
            } else {
                text
            }
        }
        (Value::Code(c), FieldKind::Categorical { levels }) => levels
            .get(usize::from(c))
            .copied()
            .unwrap_or(MISSING_FALLBACK)
            .to_string(),
        (v, _) => v.as_f64().map(|x| x.to_string()).unwrap_or_default(),
    }
}

/// Rendered pieces, with the field each slot came from.
pub fn render_segments(profile: &RiskFactorProfile) -> Vec<(Option<RiskFactor>, String)> {
    segments()
        .iter()
        .map(|seg| match *seg {
            Segment::Literal(text) => (None, text.to_string()),
            Segment::Slot(field) => (Some(field), render_value(field, profile.get(field))),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalReport {
    pub id: String,
    pub text: String,
}

pub fn render_text(profile: &RiskFactorProfile) -> String {
    render_segments(profile).into_iter().map(|(_, s)| s).collect()
}

pub fn render_report(subject: &Subject) -> ClinicalReport {
    ClinicalReport {
        id: subject.id.clone(),
        text: render_text(&subject.profile),
    }
}
