//! Independent re-checking of certificates.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::factorization::{verify_factorization, FactorizationResult};
use crate::operator::OperatorMatrix;
use crate::primarity::{verify_primarity, PrimarityResult};
use crate::quasi_diag::{verify_diagonalization, Diagonalization};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl VerificationReport {
    pub fn from_checks(checks: Vec<Check>) -> Self {
        VerificationReport {
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    pub fn merge(mut self, other: VerificationReport) -> Self {
        self.passed &= other.passed;
        self.checks.extend(other.checks);
        self
    }
}

pub const CERTIFICATE_FORMAT: &str = "haar-factor-certificate/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum CertificateBody {
    Diagonalization(Diagonalization),
    Factorization(FactorizationResult),
    Primarity(PrimarityResult),
}

/// A result together with the operator digest and the outcome of its own
/// verification at the time it was written.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub format: String,
    pub operator_digest: String,
    pub verified: bool,
    pub body: CertificateBody,
}

impl Certificate {
    /// Verifies `body` against `t` and records the outcome.
    pub fn seal(t: &OperatorMatrix, body: CertificateBody) -> Self {
        let verified = verify_body(t, &body).passed;
        Certificate {
            format: CERTIFICATE_FORMAT.into(),
            operator_digest: t.digest(),
            verified,
            body,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("certificates serialize")
    }
}

fn verify_body(t: &OperatorMatrix, body: &CertificateBody) -> VerificationReport {
    match body {
        CertificateBody::Diagonalization(d) => verify_diagonalization(t, d),
        CertificateBody::Factorization(f) => verify_factorization(t, f),
        CertificateBody::Primarity(p) => verify_primarity(t, p),
    }
}

/// Outcome of re-running a stored certificate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Replay {
    pub report: VerificationReport,
    pub stored: bool,
    /// The recomputed pass/fail equals the stored one.
    pub reproduced: bool,
}

/// Recomputes every check of `cert` from `t` alone.
pub fn verify_certificate(t: &OperatorMatrix, cert: &Certificate) -> Replay {
    let format_ok = Check::new("format", cert.format == CERTIFICATE_FORMAT, cert.format.clone());
    let digest_ok = Check::new(
        "envelope digest",
        cert.operator_digest == t.digest(),
        cert.operator_digest.clone(),
    );
    let report = VerificationReport::from_checks(vec![format_ok, digest_ok]).merge(verify_body(t, &cert.body));
    Replay {
        stored: cert.verified,
        reproduced: report.passed == cert.verified,
        report,
    }
}
