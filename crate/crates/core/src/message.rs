//! Message model exchanged between middleware nodes and its canonical wire
//! encoding.
//!
//! The wire form is a compact JSON object with the keys `kind`, `verb`,
//! `cid`, `src`, `dst`, `enc`, `payload_b64` and `t`, always in that order and
//! without whitespace. Its byte length is the size used for every bandwidth
//! calculation in the simulator, so [`Message::wire_len`] must agree with
//! `serialize(m).len()` exactly.

use std::fmt;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

/// Identifier of a middleware node (`"server"`, `"gw1"`, ...).
pub type NodeId = String;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AddressError {
    #[error("empty node id in address {0:?}")]
    EmptyNode(String),
    #[error("address {0:?} has no path segment")]
    NoPath(String),
    #[error("address {0:?} contains an empty path segment")]
    EmptySegment(String),
}

/// Destination of a REST request: the hosting node plus a resource path.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ResourceAddress {
    node_id: NodeId,
    path: Vec<String>,
}

impl ResourceAddress {
    pub fn new<I, S>(node_id: impl Into<String>, path: I) -> Result<Self, AddressError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let node_id = node_id.into();
        let path: Vec<String> = path.into_iter().map(Into::into).collect();
        let text = || format!("{}/{}", node_id, path.join("/"));
        if node_id.is_empty() || node_id.contains('/') {
            return Err(AddressError::EmptyNode(text()));
        }
        if path.is_empty() {
            return Err(AddressError::NoPath(text()));
        }
        if path.iter().any(|s| s.is_empty() || s.contains('/')) {
            return Err(AddressError::EmptySegment(text()));
        }
        Ok(Self { node_id, path })
    }

    pub fn node_id(&self) -> &str {
        &self.node_id
    }

    pub fn path(&self) -> &[String] {
        &self.path
    }

    /// Path segments joined by `/`, the key used by resource stores.
    pub fn path_text(&self) -> String {
        self.path.join("/")
    }

    /// Same path hosted on another node.
    pub fn with_node(&self, node_id: impl Into<String>) -> Self {
        Self {
            node_id: node_id.into(),
            path: self.path.clone(),
        }
    }
}

impl fmt::Display for ResourceAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.node_id)?;
        for seg in &self.path {
            write!(f, "/{seg}")?;
        }
        Ok(())
    }
}

impl FromStr for ResourceAddress {
    type Err = AddressError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.split('/');
        let node = parts.next().unwrap_or_default();
        if node.is_empty() {
            return Err(AddressError::EmptyNode(s.to_string()));
        }
        let path: Vec<&str> = parts.collect();
        if path.is_empty() {
            return Err(AddressError::NoPath(s.to_string()));
        }
        if path.iter().any(|p| p.is_empty()) {
            return Err(AddressError::EmptySegment(s.to_string()));
        }
        Ok(Self {
            node_id: node.to_string(),
            path: path.into_iter().map(str::to_string).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MessageKind {
    Request,
    Response,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verb {
    Create,
    Retrieve,
    Update,
    Delete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Encoding {
    Identity,
    Deflate,
}

impl MessageKind {
    fn as_wire(self) -> &'static str {
        match self {
            MessageKind::Request => "request",
            MessageKind::Response => "response",
        }
    }

    fn from_wire(s: &str) -> Option<Self> {
        match s {
            "request" => Some(MessageKind::Request),
            "response" => Some(MessageKind::Response),
            _ => None,
        }
    }
}

impl Verb {
    pub const ALL: [Verb; 4] = [Verb::Create, Verb::Retrieve, Verb::Update, Verb::Delete];

    fn as_wire(self) -> &'static str {
        match self {
            Verb::Create => "CREATE",
            Verb::Retrieve => "RETRIEVE",
            Verb::Update => "UPDATE",
            Verb::Delete => "DELETE",
        }
    }

    fn from_wire(s: &str) -> Option<Self> {
        Verb::ALL.into_iter().find(|v| v.as_wire() == s)
    }
}

impl Encoding {
    fn as_wire(self) -> &'static str {
        match self {
            Encoding::Identity => "identity",
            Encoding::Deflate => "deflate",
        }
    }

    fn from_wire(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(Encoding::Identity),
            "deflate" => Some(Encoding::Deflate),
            _ => None,
        }
    }
}

/// Error codes carried by error responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorCode {
    NotFound,
    UpstreamUnreachable,
    DoubleCompression,
    CorruptStream,
    MalformedMessage,
}

const ERROR_PREFIX: &str = "!error:";

impl ErrorCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::NotFound => "NOT_FOUND",
            ErrorCode::UpstreamUnreachable => "UPSTREAM_UNREACHABLE",
            ErrorCode::DoubleCompression => "DOUBLE_COMPRESSION",
            ErrorCode::CorruptStream => "CORRUPT_STREAM",
            ErrorCode::MalformedMessage => "MALFORMED_MESSAGE",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        [
            ErrorCode::NotFound,
            ErrorCode::UpstreamUnreachable,
            ErrorCode::DoubleCompression,
            ErrorCode::CorruptStream,
            ErrorCode::MalformedMessage,
        ]
        .into_iter()
        .find(|c| c.as_str() == s)
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for ErrorCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

/// A REST-style request or response.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub kind: MessageKind,
    pub verb: Verb,
    pub correlation_id: String,
    pub source: ResourceAddress,
    pub destination: Option<ResourceAddress>,
    pub payload: Vec<u8>,
    pub encoding: Encoding,
    /// Simulation time in seconds.
    pub created_at: f64,
}

impl Message {
    pub fn request(
        verb: Verb,
        correlation_id: impl Into<String>,
        source: ResourceAddress,
        destination: ResourceAddress,
        payload: Vec<u8>,
        created_at: f64,
    ) -> Self {
        Self {
            kind: MessageKind::Request,
            verb,
            correlation_id: correlation_id.into(),
            source,
            destination: Some(destination),
            payload,
            encoding: Encoding::Identity,
            created_at,
        }
    }

    /// Response to `request`, addressed back to its sender.
    pub fn response_to(request: &Message, payload: Vec<u8>, created_at: f64) -> Self {
        Self {
            kind: MessageKind::Response,
            verb: request.verb,
            correlation_id: request.correlation_id.clone(),
            source: request.destination.clone().unwrap_or_else(|| request.source.clone()),
            destination: Some(request.source.clone()),
            payload,
            encoding: Encoding::Identity,
            created_at,
        }
    }

    pub fn error_response(request: &Message, code: ErrorCode, created_at: f64) -> Self {
        let payload = format!("{ERROR_PREFIX}{code}").into_bytes();
        Self::response_to(request, payload, created_at)
    }

    /// Error code of an error response, `None` for regular messages.
    pub fn error_code(&self) -> Option<ErrorCode> {
        if self.kind != MessageKind::Response || self.encoding != Encoding::Identity {
            return None;
        }
        let text = std::str::from_utf8(&self.payload).ok()?;
        ErrorCode::parse(text.strip_prefix(ERROR_PREFIX)?)
    }

    pub fn is_error(&self) -> bool {
        self.error_code().is_some()
    }

    /// Length in bytes of `serialize(self)`, without encoding the payload.
    pub fn wire_len(&self) -> usize {
        let header = Wire::new(self, String::new());
        let header_len = serde_json::to_vec(&header)
            .expect("wire header is always serializable")
            .len();
        header_len + base64_len(self.payload.len())
    }
}

fn base64_len(n: usize) -> usize {
    n.div_ceil(3) * 4
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("MALFORMED_MESSAGE: {0}")]
pub struct MalformedMessage(pub String);

#[derive(Serialize)]
struct Wire<'a> {
    kind: &'static str,
    verb: &'static str,
    cid: &'a str,
    src: String,
    dst: Option<String>,
    enc: &'static str,
    payload_b64: String,
    t: f64,
}

impl<'a> Wire<'a> {
    fn new(m: &'a Message, payload_b64: String) -> Self {
        Self {
            kind: m.kind.as_wire(),
            verb: m.verb.as_wire(),
            cid: &m.correlation_id,
            src: m.source.to_string(),
            dst: m.destination.as_ref().map(ToString::to_string),
            enc: m.encoding.as_wire(),
            payload_b64,
            t: m.created_at,
        }
    }
}

const WIRE_KEYS: [&str; 8] = ["kind", "verb", "cid", "src", "dst", "enc", "payload_b64", "t"];

pub fn serialize(m: &Message) -> Vec<u8> {
    let wire = Wire::new(m, STANDARD.encode(&m.payload));
    serde_json::to_vec(&wire).expect("wire form is always serializable")
}

pub fn deserialize(bytes: &[u8]) -> Result<Message, MalformedMessage> {
    let bad = |why: String| MalformedMessage(why);
    let value: Value = serde_json::from_slice(bytes).map_err(|e| bad(format!("not a JSON document: {e}")))?;
    let Value::Object(obj) = value else {
        return Err(bad("top level is not an object".into()));
    };
    if let Some(extra) = obj.keys().find(|k| !WIRE_KEYS.contains(&k.as_str())) {
        return Err(bad(format!("unexpected key {extra:?}")));
    }

    let kind = str_field(&obj, "kind")?;
    let kind = MessageKind::from_wire(kind).ok_or_else(|| bad(format!("bad kind {kind:?}")))?;
    let verb = str_field(&obj, "verb")?;
    let verb = Verb::from_wire(verb).ok_or_else(|| bad(format!("bad verb {verb:?}")))?;
    let correlation_id = str_field(&obj, "cid")?.to_string();
    let source = address(str_field(&obj, "src")?)?;
    let destination = match obj.get("dst") {
        None => return Err(bad("missing field \"dst\"".into())),
        Some(Value::Null) => None,
        Some(Value::String(s)) => Some(address(s)?),
        Some(_) => return Err(bad("field \"dst\" is not a string".into())),
    };
    let enc = str_field(&obj, "enc")?;
    let encoding = Encoding::from_wire(enc).ok_or_else(|| bad(format!("bad enc {enc:?}")))?;
    let payload = STANDARD
        .decode(str_field(&obj, "payload_b64")?)
        .map_err(|e| bad(format!("invalid base64 payload: {e}")))?;
    let created_at = obj
        .get("t")
        .ok_or_else(|| bad("missing field \"t\"".into()))?
        .as_f64()
        .ok_or_else(|| bad("field \"t\" is not a number".into()))?;

    Ok(Message {
        kind,
        verb,
        correlation_id,
        source,
        destination,
        payload,
        encoding,
        created_at,
    })
}

fn str_field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a str, MalformedMessage> {
    match obj.get(key) {
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(MalformedMessage(format!("field {key:?} is not a string"))),
        None => Err(MalformedMessage(format!("missing field {key:?}"))),
    }
}

fn address(s: &str) -> Result<ResourceAddress, MalformedMessage> {
    s.parse().map_err(|e: AddressError| MalformedMessage(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn addr(s: &str) -> ResourceAddress {
        s.parse().unwrap()
    }

    fn sample(cid: &str, payload: &[u8]) -> Message {
        Message::request(
            Verb::Retrieve,
            cid,
            addr("application/app"),
            addr("gateway/maps/tile7"),
            payload.to_vec(),
            12.5,
        )
    }

    #[test]
    fn address_text_round_trips() {
        let a = ResourceAddress::new("gw1", ["maps", "tile7"]).unwrap();
        assert_eq!(a.to_string(), "gw1/maps/tile7");
        assert_eq!(a.to_string().parse::<ResourceAddress>().unwrap(), a);
        assert_eq!(a.path_text(), "maps/tile7");
    }

    #[test]
    fn address_rejects_bad_forms() {
        assert!(matches!("gw1".parse::<ResourceAddress>(), Err(AddressError::NoPath(_))));
        assert!(matches!(
            "/gw1/a".parse::<ResourceAddress>(),
            Err(AddressError::EmptyNode(_))
        ));
        assert!(matches!(
            "gw1//a".parse::<ResourceAddress>(),
            Err(AddressError::EmptySegment(_))
        ));
        assert!(matches!(
            "gw1/a/".parse::<ResourceAddress>(),
            Err(AddressError::EmptySegment(_))
        ));
        assert!(ResourceAddress::new("gw1", ["a/b"]).is_err());
        assert!(ResourceAddress::new("gw1", Vec::<String>::new()).is_err());
    }

    // Frozen from an independent Python reference encoder
    // (json.dumps with compact separators, base64.b64encode).
    #[test]
    fn canonical_bytes_match_reference_encoder() {
        let m = sample("req-000001", b"hi");
        assert_eq!(
            String::from_utf8(serialize(&m)).unwrap(),
            r#"{"kind":"request","verb":"RETRIEVE","cid":"req-000001","src":"application/app","dst":"gateway/maps/tile7","enc":"identity","payload_b64":"aGk=","t":12.5}"#
        );
        let mut absent = sample("c", &[0x00, 0xff]);
        absent.verb = Verb::Delete;
        absent.source = addr("a/b");
        absent.destination = None;
        absent.created_at = 3.0;
        assert_eq!(
            String::from_utf8(serialize(&absent)).unwrap(),
            r#"{"kind":"request","verb":"DELETE","cid":"c","src":"a/b","dst":null,"enc":"identity","payload_b64":"AP8=","t":3.0}"#
        );
    }

    #[test]
    fn correlation_id_change_touches_only_its_bytes() {
        let a = serialize(&sample("req-000001", b"hi"));
        let b = serialize(&sample("req-000002", b"hi"));
        assert_eq!(a.len(), b.len());
        let diff: Vec<usize> = (0..a.len()).filter(|&i| a[i] != b[i]).collect();
        // Reference script: single differing byte at offset 52, inside the
        // cid value that starts at offset 43.
        assert_eq!(diff, vec![52]);
    }

    #[test]
    fn empty_payload_serializes_to_empty_field() {
        let m = sample("c", b"");
        let v: Value = serde_json::from_slice(&serialize(&m)).unwrap();
        assert_eq!(v["payload_b64"], "");
        assert!(deserialize(&serialize(&m)).unwrap().payload.is_empty());
    }

    #[test]
    fn deserialize_rejects_malformed_input() {
        assert!(deserialize(b"").is_err());
        assert!(deserialize(b"[]").is_err());
        let good = String::from_utf8(serialize(&sample("c", b"hi"))).unwrap();
        for broken in [
            good.replace("RETRIEVE", "PATCH"),
            good.replace("\"request\"", "\"notify\""),
            good.replace("identity", "gzip"),
            good.replace("aGk=", "a*k="),
            good.replace(",\"t\":12.5", ""),
            good.replace("\"dst\":\"gateway/maps/tile7\",", ""),
            good.replace("gateway/maps/tile7", "gateway"),
            good.replace("}", ",\"extra\":1}"),
        ] {
            let err = deserialize(broken.as_bytes()).unwrap_err();
            assert!(err.to_string().starts_with("MALFORMED_MESSAGE"), "{broken}");
        }
    }

    #[test]
    fn error_responses_are_recognised() {
        let req = sample("c", b"");
        let resp = Message::error_response(&req, ErrorCode::NotFound, 1.0);
        assert_eq!(resp.error_code(), Some(ErrorCode::NotFound));
        assert_eq!(resp.correlation_id, "c");
        assert_eq!(resp.destination.as_ref(), Some(&req.source));
        assert!(Message::response_to(&req, b"data".to_vec(), 1.0).error_code().is_none());
    }

    #[test]
    fn wire_len_grows_with_payload() {
        let mut prev = sample("c", b"").wire_len();
        for n in 1..64 {
            let len = sample("c", &vec![7u8; n]).wire_len();
            assert!(len >= prev);
            if n >= 3 {
                assert!(len > sample("c", &vec![7u8; n - 3]).wire_len());
            }
            prev = len;
        }
    }

    fn arb_segment() -> impl Strategy<Value = String> {
        "[a-zA-Z0-9_.~-]{1,8}"
    }

    fn arb_address() -> impl Strategy<Value = ResourceAddress> {
        (arb_segment(), prop::collection::vec(arb_segment(), 1..4))
            .prop_map(|(n, p)| ResourceAddress::new(n, p).unwrap())
    }

    prop_compose! {
        fn arb_message()(
            kind in prop_oneof![Just(MessageKind::Request), Just(MessageKind::Response)],
            verb in prop::sample::select(Verb::ALL.to_vec()),
            cid in "[ -~]{0,16}",
            source in arb_address(),
            destination in prop::option::of(arb_address()),
            payload in prop::collection::vec(any::<u8>(), 0..300),
            deflate in any::<bool>(),
            created_at in 0.0f64..1e6,
        ) -> Message {
            Message {
                kind, verb, correlation_id: cid, source, destination, payload,
                encoding: if deflate { Encoding::Deflate } else { Encoding::Identity },
                created_at,
            }
        }
    }

    proptest! {
        #[test]
        fn serialization_round_trips(m in arb_message()) {
            let bytes = serialize(&m);
            prop_assert_eq!(bytes.len(), m.wire_len());
            prop_assert_eq!(deserialize(&bytes).unwrap(), m);
        }
    }
}
