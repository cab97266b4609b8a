use std::fmt;

use serde::{Deserialize, Serialize};

use super::hash::{sha256, Digest};
use super::LedgerError;

/// Wearable zone, one per device type.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Zone {
    A,
    B,
    C,
    D,
    E,
    F,
    G,
}

impl Zone {
    pub const ALL: [Zone; 7] = [Zone::A, Zone::B, Zone::C, Zone::D, Zone::E, Zone::F, Zone::G];

    pub fn letter(self) -> char {
        match self {
            Zone::A => 'A',
            Zone::B => 'B',
            Zone::C => 'C',
            Zone::D => 'D',
            Zone::E => 'E',
            Zone::F => 'F',
            Zone::G => 'G',
        }
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TxKind {
    VitalsReading,
    LabResult,
    ConsentRecord,
    ShipmentTelemetry,
    ProtocolEvent,
}

impl TxKind {
    pub fn tag(self) -> u8 {
        match self {
            TxKind::VitalsReading => 1,
            TxKind::LabResult => 2,
            TxKind::ConsentRecord => 3,
            TxKind::ShipmentTelemetry => 4,
            TxKind::ProtocolEvent => 5,
        }
    }

    /// Kinds that originate on a patient's wearable and therefore carry a zone.
    pub fn is_wearable_sourced(self) -> bool {
        matches!(self, TxKind::VitalsReading)
    }
}

/// Where a transaction came from: country, site, patient (or shipment), zone.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct Origin {
    pub country: String,
    pub site: String,
    pub patient: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zone: Option<Zone>,
}

impl Origin {
    pub fn new(country: &str, site: &str, patient: &str, zone: Option<Zone>) -> Self {
        Origin {
            country: country.to_string(),
            site: site.to_string(),
            patient: patient.to_string(),
            zone,
        }
    }
}

/// Payload bytes, either carried on-chain or replaced by their content digest.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Inline(#[serde(with = "hex_bytes")] Vec<u8>),
    Stored(Digest),
}

impl Payload {
    fn storage_tag(&self) -> u8 {
        match self {
            Payload::Inline(_) => 0,
            Payload::Stored(_) => 1,
        }
    }

    pub fn bytes(&self) -> &[u8] {
        match self {
            Payload::Inline(b) => b,
            Payload::Stored(d) => d.as_bytes(),
        }
    }

    pub(crate) fn bytes_mut(&mut self) -> &mut [u8] {
        match self {
            Payload::Inline(b) => b,
            Payload::Stored(d) => &mut d.0,
        }
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transaction {
    pub tx_id: u64,
    pub origin: Origin,
    pub kind: TxKind,
    /// Wallet public tag of the registered device, or a node label for
    /// node-originated events.
    pub submitter: String,
    pub payload: Payload,
    /// Simulated ticks.
    pub timestamp: u64,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    let len = u16::try_from(s.len()).expect("origin field longer than 65535 bytes");
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl Transaction {
    pub fn validate(&self) -> Result<(), LedgerError> {
        if self.kind.is_wearable_sourced() && self.origin.zone.is_none() {
            return Err(LedgerError::MissingZone(self.tx_id));
        }
        Ok(())
    }

    /// Canonical byte encoding; the Merkle leaf is its SHA-256.
    ///
    /// `tx_id` u64 BE, kind tag byte, four origin strings (u16 BE length +
    /// UTF-8, zone as a one-letter string or empty), submitter string,
    /// payload storage tag byte + u32 BE length + bytes, timestamp u64 BE.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let payload = self.payload.bytes();
        let mut out = Vec::with_capacity(64 + payload.len());
        out.extend_from_slice(&self.tx_id.to_be_bytes());
        out.push(self.kind.tag());
        put_str(&mut out, &self.origin.country);
        put_str(&mut out, &self.origin.site);
        put_str(&mut out, &self.origin.patient);
        let zone = self.origin.zone.map(|z| z.letter().to_string()).unwrap_or_default();
        put_str(&mut out, &zone);
        put_str(&mut out, &self.submitter);
        out.push(self.payload.storage_tag());
        let len = u32::try_from(payload.len()).expect("payload longer than 4 GiB");
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(payload);
        out.extend_from_slice(&self.timestamp.to_be_bytes());
        out
    }

    pub fn leaf_digest(&self) -> Digest {
        sha256(&self.canonical_bytes())
    }

    pub fn telemetry(&self) -> Option<Telemetry> {
        match (&self.kind, &self.payload) {
            (TxKind::ShipmentTelemetry, Payload::Inline(bytes)) => Telemetry::decode(bytes),
            _ => None,
        }
    }
}

/// Data-logger reading attached to a shipment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Telemetry {
    pub temperature_c: f64,
    pub humidity_rh: f64,
}

const TELEMETRY_MAGIC: &[u8; 4] = b"TLM1";

impl Telemetry {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20);
        out.extend_from_slice(TELEMETRY_MAGIC);
        out.extend_from_slice(&self.temperature_c.to_bits().to_be_bytes());
        out.extend_from_slice(&self.humidity_rh.to_bits().to_be_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Option<Telemetry> {
        if bytes.len() != 20 || &bytes[..4] != TELEMETRY_MAGIC {
            return None;
        }
        let t = u64::from_be_bytes(bytes[4..12].try_into().ok()?);
        let h = u64::from_be_bytes(bytes[12..20].try_into().ok()?);
        Some(Telemetry {
            temperature_c: f64::from_bits(t),
            humidity_rh: f64::from_bits(h),
        })
    }
}
