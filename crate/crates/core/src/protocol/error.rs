//! The coded error taxonomy shared by every actor.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Protocol error codes. The numeric value is also the wire form (`COD<n>`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ErrorCode {
    /// Client registers a username that is already registered.
    Cod100,
    /// Dealer forwards a user the service already has.
    Cod150,
    /// Client calls the service (or the dealer) ahead of the expected step.
    Cod170,
    /// MC sent by the client differs from the copy forwarded by the dealer.
    Cod400,
    /// Login for an unregistered user.
    Cod600,
    /// Abscissa presented to a shareholder does not match its stored digest.
    Cod700,
    /// Shareholder holds a share inconsistent with its commitments.
    Cod750,
    /// Dealer could not collect `t` shares.
    Cod800,
    /// Some returned shares were bad but at least `t` were good.
    Cod830,
    /// Enough shares returned, but fewer than `t` were good.
    Cod850,
    /// Rebuilt secret differs from the one presented by the client.
    Cod860,
    /// Service rejects the forwarded or presented EMS.
    Cod900,
    /// Client rejects the service's key envelope.
    Cod950,
    /// Dealer cannot open MS with the reported k'.
    Cod2000,
    /// Dealer finds `D_k(MC)` differs from the reported blinding.
    Cod2400,
    /// Reported MC' differs from the one in the login request.
    Cod2600,
}

/// How far an error propagates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Severity {
    /// The phase continues; the event raises suspicion.
    NonFatal,
    /// The current request fails; the system is unaffected.
    RequestFatal,
    /// The phase halts.
    Fatal,
}

impl Severity {
    pub fn is_fatal(self) -> bool {
        !matches!(self, Severity::NonFatal)
    }
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 16] = [
        ErrorCode::Cod100,
        ErrorCode::Cod150,
        ErrorCode::Cod170,
        ErrorCode::Cod400,
        ErrorCode::Cod600,
        ErrorCode::Cod700,
        ErrorCode::Cod750,
        ErrorCode::Cod800,
        ErrorCode::Cod830,
        ErrorCode::Cod850,
        ErrorCode::Cod860,
        ErrorCode::Cod900,
        ErrorCode::Cod950,
        ErrorCode::Cod2000,
        ErrorCode::Cod2400,
        ErrorCode::Cod2600,
    ];

    pub fn number(self) -> u32 {
        match self {
            ErrorCode::Cod100 => 100,
            ErrorCode::Cod150 => 150,
            ErrorCode::Cod170 => 170,
            ErrorCode::Cod400 => 400,
            ErrorCode::Cod600 => 600,
            ErrorCode::Cod700 => 700,
            ErrorCode::Cod750 => 750,
            ErrorCode::Cod800 => 800,
            ErrorCode::Cod830 => 830,
            ErrorCode::Cod850 => 850,
            ErrorCode::Cod860 => 860,
            ErrorCode::Cod900 => 900,
            ErrorCode::Cod950 => 950,
            ErrorCode::Cod2000 => 2000,
            ErrorCode::Cod2400 => 2400,
            ErrorCode::Cod2600 => 2600,
        }
    }

    pub fn from_number(n: u32) -> Option<ErrorCode> {
        ErrorCode::ALL.into_iter().find(|c| c.number() == n)
    }

    pub fn severity(self) -> Severity {
        classify_error(self)
    }

    /// The phase in which the code can arise.
    pub fn phase(self) -> super::Phase {
        if self.number() < 600 {
            super::Phase::Sharing
        } else {
            super::Phase::Reconstruction
        }
    }
}

pub fn classify_error(code: ErrorCode) -> Severity {
    use ErrorCode::*;
    match code {
        Cod700 | Cod750 | Cod830 => Severity::NonFatal,
        Cod100 | Cod150 | Cod170 => Severity::RequestFatal,
        Cod400 | Cod600 | Cod800 | Cod850 | Cod860 | Cod900 | Cod950 | Cod2000 | Cod2400
        | Cod2600 => Severity::Fatal,
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "COD{}", self.number())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown error code {0:?}")]
pub struct UnknownCode(pub String);

impl FromStr for ErrorCode {
    type Err = UnknownCode;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.strip_prefix("COD")
            .and_then(|n| n.parse::<u32>().ok())
            .and_then(ErrorCode::from_number)
            .ok_or_else(|| UnknownCode(s.to_string()))
    }
}

impl From<ErrorCode> for String {
    fn from(c: ErrorCode) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for ErrorCode {
    type Error = UnknownCode;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// A raised protocol error, attributed to the actor that detected it.
#[derive(Clone, Debug, Error, PartialEq, Eq, Serialize, Deserialize)]
#[error("{code} raised by {role} for {username:?}: {detail}")]
pub struct ProtocolError {
    pub code: ErrorCode,
    pub role: String,
    pub username: String,
    pub detail: String,
}

/// One of the seven checks made during reconstruction.
#[derive(Clone, Copy, Debug)]
pub struct Check {
    pub number: u8,
    /// Actor and operation performing the check.
    pub operation: &'static str,
    pub predicate: &'static str,
    pub codes: &'static [ErrorCode],
}

/// The reconstruction check graph: check number -> operation -> codes.
pub const RECONSTRUCTION_CHECKS: [Check; 7] = [
    Check {
        number: 1,
        operation: "shareholder_release",
        predicate: "h(x') == stored h(x_i)",
        codes: &[ErrorCode::Cod700],
    },
    Check {
        number: 2,
        operation: "shareholder_release",
        predicate: "g^s h^t == prod c_j^(x^j) at the shareholder",
        codes: &[ErrorCode::Cod750],
    },
    Check {
        number: 3,
        operation: "dealer_reconstruct",
        predicate: "g^s h^t == prod c_j^(x^j) at the dealer",
        codes: &[ErrorCode::Cod830, ErrorCode::Cod850],
    },
    Check {
        number: 4,
        operation: "dealer_reconstruct",
        predicate: "rebuilt S' == presented S'",
        codes: &[ErrorCode::Cod860],
    },
    Check {
        number: 5,
        operation: "service_verify_login",
        predicate: "forwarded EMS == presented EMS and D_k(MC) == g^S' h^r'",
        codes: &[ErrorCode::Cod900],
    },
    Check {
        number: 6,
        operation: "client_verify_service",
        predicate: "D_k'(MS) == MC",
        codes: &[ErrorCode::Cod950],
    },
    Check {
        number: 7,
        operation: "dealer_final_checks",
        predicate: "D_k'(MS) opens, D_k(MC) == g^S' h^r', MC' == reported MC'",
        codes: &[ErrorCode::Cod2000, ErrorCode::Cod2400, ErrorCode::Cod2600],
    },
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classification_examples() {
        assert_eq!(classify_error(ErrorCode::Cod830), Severity::NonFatal);
        assert_eq!(classify_error(ErrorCode::Cod850), Severity::Fatal);
        assert_eq!(classify_error(ErrorCode::Cod860), Severity::Fatal);
        assert_eq!(classify_error(ErrorCode::Cod100), Severity::RequestFatal);
        assert!(ErrorCode::Cod170.severity().is_fatal());
        assert!(!ErrorCode::Cod700.severity().is_fatal());
    }

    #[test]
    fn wire_form_round_trips_and_rejects_unknown() {
        for c in ErrorCode::ALL {
            assert_eq!(c.to_string().parse::<ErrorCode>().unwrap(), c);
            let json = serde_json::to_string(&c).unwrap();
            assert_eq!(json, format!("\"{c}\""));
        }
        assert!("COD123".parse::<ErrorCode>().is_err());
        assert!("800".parse::<ErrorCode>().is_err());
        assert!(serde_json::from_str::<ErrorCode>("\"COD999\"").is_err());
    }

    #[test]
    fn check_graph_is_complete() {
        let numbers: Vec<u8> = RECONSTRUCTION_CHECKS.iter().map(|c| c.number).collect();
        assert_eq!(numbers, (1..=7).collect::<Vec<_>>());
        let reconstruction: Vec<ErrorCode> = ErrorCode::ALL
            .into_iter()
            .filter(|c| c.phase() == crate::protocol::Phase::Reconstruction)
            .filter(|c| !matches!(c, ErrorCode::Cod600 | ErrorCode::Cod800))
            .collect();
        // every detection code belongs to exactly one check
        for code in &reconstruction {
            let owners = RECONSTRUCTION_CHECKS.iter().filter(|c| c.codes.contains(code)).count();
            assert_eq!(owners, 1, "{code}");
        }
        for check in RECONSTRUCTION_CHECKS {
            assert!(!check.codes.is_empty());
            assert!(check.codes.iter().all(|c| reconstruction.contains(c)));
        }
        // checks 4..7 are fatal, 1 and 2 are not
        for check in RECONSTRUCTION_CHECKS {
            let fatal = check.codes.iter().any(|c| c.severity().is_fatal());
            assert_eq!(fatal, check.number >= 3, "check {}", check.number);
        }
    }
}
