use serde::{Deserialize, Serialize};

/// Running maximum of a sampled residual.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub n_samples: usize,
    pub max_residual: f64,
}

impl Measurement {
    pub fn record(&mut self, r: f64) {
        self.n_samples += 1;
        // NaN must poison the result rather than vanish in max()
        self.max_residual = if r.is_nan() || self.max_residual.is_nan() { f64::NAN } else { self.max_residual.max(r) };
    }

    pub fn merge(&mut self, other: Measurement) {
        if other.n_samples == 0 {
            return;
        }
        self.n_samples += other.n_samples - 1;
        self.record(other.max_residual);
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.n_samples > 0 && self.max_residual < tol
    }
}

pub const SCHEMA_VERSION: u32 = 1;

/// How a value is compared with its tolerance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bound {
    /// Pass iff `value < tolerance` (residuals).
    Below,
    /// Pass iff `value > tolerance` (singular values, radii, witnesses of failure).
    Above,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    /// Registry check that produced the entry.
    pub group: String,
    pub check: String,
    /// The property being tested, in words and formulas.
    pub anchor: String,
    pub n_samples: usize,
    /// Max residual for `below` entries, the tested minimum for `above` ones.
    pub max_residual: f64,
    pub tolerance: f64,
    pub bound: Bound,
    pub pass: bool,
    /// A negative control: the entry is meant to fail, and counts toward
    /// the overall result only if it unexpectedly passes.
    pub expected_fail: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

impl Entry {
    pub fn new(group: &str, check: &str, anchor: &str, m: Measurement, tolerance: f64, bound: Bound) -> Self {
        let pass = m.n_samples > 0
            && match bound {
                Bound::Below => m.max_residual < tolerance,
                Bound::Above => m.max_residual > tolerance,
            };
        Self {
            group: group.into(),
            check: check.into(),
            anchor: anchor.into(),
            n_samples: m.n_samples,
            max_residual: m.max_residual,
            tolerance,
            bound,
            pass,
            expected_fail: false,
            error: None,
        }
    }

    pub fn failed(group: &str, check: &str, anchor: &str, err: &crate::Error) -> Self {
        Self {
            group: group.into(),
            check: check.into(),
            anchor: anchor.into(),
            n_samples: 0,
            max_residual: f64::NAN,
            tolerance: f64::NAN,
            bound: Bound::Below,
            pass: false,
            expected_fail: false,
            error: Some(err.to_string()),
        }
    }

    pub fn expect_fail(mut self) -> Self {
        self.expected_fail = true;
        self
    }

    /// Whether the entry is as intended: passing, or failing by design.
    pub fn ok(&self) -> bool {
        if self.expected_fail {
            !self.pass && self.error.is_none()
        } else {
            self.pass
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report<H> {
    pub schema: u32,
    pub header: H,
    pub entries: Vec<Entry>,
    pub overall: bool,
}

impl<H> Report<H> {
    pub fn new(header: H, entries: Vec<Entry>) -> Self {
        let overall = entries.iter().all(Entry::ok);
        Self { schema: SCHEMA_VERSION, header, entries, overall }
    }
}
