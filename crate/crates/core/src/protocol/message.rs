//! Wire vocabulary and its canonical encoding.
//!
//! Every message is a document `{type, session_id, username, payload}`.
//! Canonical bytes are compact JSON with object keys sorted, so byte
//! equality of two encodings is equality of the messages.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::error::ErrorCode;
use super::logging::LogRecord;
use super::Phase;
use crate::cipher::{Ciphertext, SymKey};
use crate::hexser;
use crate::pedersen::{BlindedSecret, CommitmentVector};

/// Maximum accepted frame length.
pub const MAX_FRAME: usize = 16 << 20;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("malformed message: {0}")]
    Json(#[from] serde_json::Error),
    #[error("frame of {0} bytes exceeds limit")]
    TooLarge(usize),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Addressable actors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeId {
    Client(u32),
    Dealer,
    Shareholder(u16),
    Service,
    Logger,
}

impl NodeId {
    pub fn role(&self) -> &'static str {
        match self {
            NodeId::Client(_) => "client",
            NodeId::Dealer => "dealer",
            NodeId::Shareholder(_) => "shareholder",
            NodeId::Service => "service",
            NodeId::Logger => "logger",
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Client(i) => write!(f, "client-{i}"),
            NodeId::Shareholder(i) => write!(f, "shareholder-{i}"),
            other => f.write_str(other.role()),
        }
    }
}

impl FromStr for NodeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dealer" => return Ok(NodeId::Dealer),
            "service" => return Ok(NodeId::Service),
            "logger" => return Ok(NodeId::Logger),
            _ => {}
        }
        if let Some(i) = s.strip_prefix("shareholder-") {
            return i.parse().map(NodeId::Shareholder).map_err(|e| e.to_string());
        }
        if let Some(i) = s.strip_prefix("client-") {
            return i.parse().map(NodeId::Client).map_err(|e| e.to_string());
        }
        Err(format!("unknown node id {s:?}"))
    }
}

impl Serialize for NodeId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// The client's login submission.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoginRequest {
    pub s_prime: BlindedSecret,
    #[serde(with = "hexser::ints")]
    pub abscissae: Vec<BigUint>,
    pub s_double_prime: BlindedSecret,
    pub mc_prime: Ciphertext,
    pub ems: Ciphertext,
}

/// What the service discloses to the dealer after opening a session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoginReport {
    pub k: SymKey,
    pub k_prime: SymKey,
    pub ms: Ciphertext,
    #[serde(with = "hexser::int")]
    pub blinding: BigUint,
    pub mc_prime: Ciphertext,
}

/// A share tagged with the shareholder slot it came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexedShare {
    pub index: u16,
    #[serde(with = "hexser::int")]
    pub s: BigUint,
    #[serde(with = "hexser::int")]
    pub t_val: BigUint,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Body {
    // sharing phase
    SignupMc {
        mc: Ciphertext,
    },
    StoreMc {
        mc: Ciphertext,
    },
    ClaimMs {
        mc: Ciphertext,
    },
    MsIssued {
        ms: Ciphertext,
    },
    DealSecret {
        s_prime: BlindedSecret,
    },
    StoreShare {
        #[serde(with = "hexser::int")]
        s: BigUint,
        #[serde(with = "hexser::int")]
        t_val: BigUint,
        #[serde(with = "hexser::bytes32")]
        digest: [u8; 32],
    },
    Commitments {
        commitments: CommitmentVector,
    },
    Abscissae {
        #[serde(with = "hexser::ints")]
        abscissae: Vec<BigUint>,
    },

    // reconstruction phase
    Login(LoginRequest),
    ReleaseShare {
        #[serde(with = "hexser::int")]
        x: BigUint,
    },
    Share {
        #[serde(with = "hexser::int")]
        s: BigUint,
        #[serde(with = "hexser::int")]
        t_val: BigUint,
    },
    ForwardEms {
        ems: Ciphertext,
    },
    PresentEms {
        ems: Ciphertext,
    },
    KeyEnvelope {
        envelope: Ciphertext,
    },
    NextMc {
        mc_prime: Ciphertext,
    },
    SessionOpened {
        ms_prime: Ciphertext,
        token: String,
    },
    Report(LoginReport),

    // service-key custody
    BackupKey {
        owner: String,
        shares: Vec<IndexedShare>,
        commitments: CommitmentVector,
    },
    StoreKeyShare {
        owner: String,
        #[serde(with = "hexser::int")]
        s: BigUint,
        #[serde(with = "hexser::int")]
        t_val: BigUint,
        commitments: CommitmentVector,
    },
    RestoreKey {
        owner: String,
        commitments: CommitmentVector,
    },
    ReleaseKeyShare {
        owner: String,
        commitments: CommitmentVector,
    },
    KeyShares {
        shares: Vec<IndexedShare>,
    },

    // control
    Ack,
    Busy,
    Error {
        code: Option<ErrorCode>,
        detail: String,
    },
    Log(LogRecord),
}

impl Body {
    /// The `type` tag.
    pub fn kind(&self) -> &'static str {
        match self {
            Body::SignupMc { .. } => "signup_mc",
            Body::StoreMc { .. } => "store_mc",
            Body::ClaimMs { .. } => "claim_ms",
            Body::MsIssued { .. } => "ms_issued",
            Body::DealSecret { .. } => "deal_secret",
            Body::StoreShare { .. } => "store_share",
            Body::Commitments { .. } => "commitments",
            Body::Abscissae { .. } => "abscissae",
            Body::Login(_) => "login",
            Body::ReleaseShare { .. } => "release_share",
            Body::Share { .. } => "share",
            Body::ForwardEms { .. } => "forward_ems",
            Body::PresentEms { .. } => "present_ems",
            Body::KeyEnvelope { .. } => "key_envelope",
            Body::NextMc { .. } => "next_mc",
            Body::SessionOpened { .. } => "session_opened",
            Body::Report(_) => "report",
            Body::BackupKey { .. } => "backup_key",
            Body::StoreKeyShare { .. } => "store_key_share",
            Body::RestoreKey { .. } => "restore_key",
            Body::ReleaseKeyShare { .. } => "release_key_share",
            Body::KeyShares { .. } => "key_shares",
            Body::Ack => "ack",
            Body::Busy => "busy",
            Body::Error { .. } => "error",
            Body::Log(_) => "log",
        }
    }

    /// The protocol phase a request belongs to.
    pub fn phase(&self) -> Phase {
        match self {
            Body::SignupMc { .. }
            | Body::StoreMc { .. }
            | Body::ClaimMs { .. }
            | Body::MsIssued { .. }
            | Body::DealSecret { .. }
            | Body::StoreShare { .. }
            | Body::Commitments { .. }
            | Body::Abscissae { .. } => Phase::Sharing,
            Body::Login(_)
            | Body::ReleaseShare { .. }
            | Body::Share { .. }
            | Body::ForwardEms { .. }
            | Body::PresentEms { .. }
            | Body::KeyEnvelope { .. }
            | Body::NextMc { .. }
            | Body::SessionOpened { .. }
            | Body::Report(_) => Phase::Reconstruction,
            Body::BackupKey { .. }
            | Body::StoreKeyShare { .. }
            | Body::RestoreKey { .. }
            | Body::ReleaseKeyShare { .. }
            | Body::KeyShares { .. } => Phase::KeyCustody,
            Body::Ack | Body::Busy | Body::Error { .. } | Body::Log(_) => Phase::Control,
        }
    }

    pub fn error(code: Option<ErrorCode>, detail: impl Into<String>) -> Body {
        Body::Error { code, detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub session_id: String,
    pub username: String,
    #[serde(flatten)]
    pub body: Body,
}

impl Message {
    pub fn new(session_id: impl Into<String>, username: impl Into<String>, body: Body) -> Message {
        Message { session_id: session_id.into(), username: username.into(), body }
    }

    /// A reply in the same session and for the same user.
    pub fn reply(&self, body: Body) -> Message {
        Message { session_id: self.session_id.clone(), username: self.username.clone(), body }
    }

    pub fn kind(&self) -> &'static str {
        self.body.kind()
    }

    /// Canonical encoding: compact JSON, object keys in sorted order.
    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        let value = serde_json::to_value(self).expect("messages serialize");
        serde_json::to_vec(&value).expect("values serialize")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Message, CodecError> {
        Ok(serde_json::from_slice(bytes)?)
    }
}

/// Writes a 4-byte big-endian length prefix followed by the message bytes.
pub fn write_frame<W: std::io::Write>(w: &mut W, msg: &Message) -> Result<(), CodecError> {
    let bytes = msg.to_canonical_bytes();
    if bytes.len() > MAX_FRAME {
        return Err(CodecError::TooLarge(bytes.len()));
    }
    w.write_all(&(bytes.len() as u32).to_be_bytes())?;
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

pub fn read_frame<R: std::io::Read>(r: &mut R) -> Result<Message, CodecError> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(CodecError::TooLarge(len));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Message::from_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Message {
        Message::new(
            "s1",
            "alice",
            Body::StoreShare { s: BigUint::from(255u32), t_val: BigUint::from(16u32), digest: [7; 32] },
        )
    }

    #[test]
    fn canonical_form_has_sorted_fields_and_hex_leaves() {
        let text = String::from_utf8(sample().to_canonical_bytes()).unwrap();
        assert!(text.starts_with(r#"{"payload":{"digest":""#), "{text}");
        assert!(text.contains(r#""s":"ff""#));
        assert!(text.ends_with(r#""session_id":"s1","type":"store_share","username":"alice"}"#), "{text}");
    }

    #[test]
    fn decode_then_reencode_is_identity() {
        let msgs = vec![
            sample(),
            Message::new("s", "u", Body::Ack),
            Message::new("s", "u", Body::error(Some(ErrorCode::Cod860), "mismatch")),
            Message::new("s", "u", Body::MsIssued { ms: Ciphertext(vec![1, 2, 3]) }),
        ];
        for m in msgs {
            let bytes = m.to_canonical_bytes();
            let back = Message::from_bytes(&bytes).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_canonical_bytes(), bytes);
        }
    }

    #[test]
    fn framing_round_trip_and_limits() {
        let mut buf = Vec::new();
        write_frame(&mut buf, &sample()).unwrap();
        assert_eq!(u32::from_be_bytes(buf[..4].try_into().unwrap()) as usize, buf.len() - 4);
        assert_eq!(read_frame(&mut buf.as_slice()).unwrap(), sample());
        let huge = ((MAX_FRAME + 1) as u32).to_be_bytes();
        assert!(matches!(read_frame(&mut huge.as_slice()), Err(CodecError::TooLarge(_))));
        assert!(read_frame(&mut &buf[..10]).is_err());
    }

    #[test]
    fn node_ids_parse() {
        for id in [NodeId::Dealer, NodeId::Service, NodeId::Logger, NodeId::Shareholder(3), NodeId::Client(9)] {
            assert_eq!(id.to_string().parse::<NodeId>().unwrap(), id);
        }
        assert!("nobody".parse::<NodeId>().is_err());
    }
}
