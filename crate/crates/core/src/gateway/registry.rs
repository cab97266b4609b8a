use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::store::ContentStore;
use super::GatewayError;
use crate::ledger::{sha256_parts, Digest, Zone};
use crate::trust::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum WdType {
    MedicalEarbud,
    EcgPatch,
    ChestStrap,
    SmartWatch,
    Clothing,
    Helmet,
    OuraRing,
}

impl WdType {
    pub const ALL: [WdType; 7] = [
        WdType::MedicalEarbud,
        WdType::EcgPatch,
        WdType::ChestStrap,
        WdType::SmartWatch,
        WdType::Clothing,
        WdType::Helmet,
        WdType::OuraRing,
    ];

    /// The fixed device-type to zone table.
    pub fn zone(self) -> Zone {
        match self {
            WdType::MedicalEarbud => Zone::A,
            WdType::EcgPatch => Zone::B,
            WdType::ChestStrap => Zone::C,
            WdType::SmartWatch => Zone::D,
            WdType::Clothing => Zone::E,
            WdType::Helmet => Zone::F,
            WdType::OuraRing => Zone::G,
        }
    }

    pub fn category(self) -> &'static str {
        match self {
            WdType::MedicalEarbud | WdType::Helmet => "head",
            WdType::EcgPatch | WdType::ChestStrap | WdType::Clothing => "torso",
            WdType::SmartWatch | WdType::OuraRing => "limb",
        }
    }
}

/// Opaque identity tokens. The public tag identifies the device at the
/// gateway edge; the secret tag never leaves the registry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wallet {
    pub public_tag: Digest,
    pub secret_tag: Digest,
}

impl Wallet {
    fn mint(patient_id: &str, device_id: &str) -> Self {
        let public_tag = sha256_parts(&[b"wallet-public", patient_id.as_bytes(), b"/", device_id.as_bytes()]);
        let secret_tag = sha256_parts(&[b"wallet-secret", patient_id.as_bytes(), b"/", device_id.as_bytes()]);
        Wallet { public_tag, secret_tag }
    }

    /// How the wallet appears as a transaction submitter.
    pub fn submitter(&self) -> String {
        format!("wallet:{}", self.public_tag)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TrustLevels {
    pub patient_trust: f64,
    pub pi_trust: f64,
    pub global_trust: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSet {
    pub wd_recognizer: String,
    pub wd_type: Option<WdType>,
    /// Carried but not used by any rule.
    pub wd_age: u32,
    /// Carried but not used by any rule.
    pub wd_priority: u8,
    pub wd_category: String,
    pub wd_zone: Option<Zone>,
    pub environment_timestamp: u64,
    #[serde(default)]
    pub trust_levels: TrustLevels,
}

impl AttributeSet {
    pub fn is_complete(&self) -> bool {
        !self.wd_recognizer.is_empty()
            && !self.wd_category.is_empty()
            && matches!((self.wd_type, self.wd_zone), (Some(t), Some(z)) if t.zone() == z)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceRegistration {
    pub device_id: String,
    pub patient_id: String,
    pub wd_type: WdType,
    pub zone: Zone,
    pub wallet: Wallet,
    pub attributes: AttributeSet,
    /// Where the attribute set lives in the content store.
    pub attributes_digest: Digest,
}

/// Who a patient is on the network: the node that speaks for the patient,
/// the PI node supervising them, and the channel their data goes to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Enrollment {
    pub patient_id: String,
    pub channel: String,
    pub patient_node: NodeId,
    pub pi_node: NodeId,
    pub country: String,
    pub site: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    patients: BTreeMap<String, Enrollment>,
    devices: BTreeMap<(String, String), DeviceRegistration>,
    by_wallet: BTreeMap<Digest, (String, String)>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn enroll(&mut self, enrollment: Enrollment) {
        self.patients.insert(enrollment.patient_id.clone(), enrollment);
    }

    pub fn enrollment(&self, patient_id: &str) -> Option<&Enrollment> {
        self.patients.get(patient_id)
    }

    pub fn register_device(
        &mut self,
        patient_id: &str,
        device_id: &str,
        wd_type: WdType,
        time: u64,
        store: &mut ContentStore,
    ) -> Result<DeviceRegistration, GatewayError> {
        if !self.patients.contains_key(patient_id) {
            return Err(GatewayError::UnknownPatient(patient_id.to_string()));
        }
        let key = (patient_id.to_string(), device_id.to_string());
        if self.devices.contains_key(&key) {
            return Err(GatewayError::DuplicateDevice(patient_id.to_string(), device_id.to_string()));
        }
        let wallet = Wallet::mint(patient_id, device_id);
        if self.by_wallet.contains_key(&wallet.public_tag) {
            return Err(GatewayError::DuplicateDevice(patient_id.to_string(), device_id.to_string()));
        }
        let attributes = AttributeSet {
            wd_recognizer: device_id.to_string(),
            wd_type: Some(wd_type),
            wd_age: 0,
            wd_priority: 1,
            wd_category: wd_type.category().to_string(),
            wd_zone: Some(wd_type.zone()),
            environment_timestamp: time,
            trust_levels: TrustLevels::default(),
        };
        let bytes = serde_json::to_vec(&attributes).expect("attribute set serializes");
        let attributes_digest = store.put(&bytes);
        let reg = DeviceRegistration {
            device_id: device_id.to_string(),
            patient_id: patient_id.to_string(),
            wd_type,
            zone: wd_type.zone(),
            wallet,
            attributes,
            attributes_digest,
        };
        self.by_wallet.insert(wallet.public_tag, key.clone());
        self.devices.insert(key, reg.clone());
        Ok(reg)
    }

    pub fn by_wallet(&self, public_tag: &Digest) -> Option<&DeviceRegistration> {
        self.by_wallet.get(public_tag).and_then(|k| self.devices.get(k))
    }

    pub fn devices(&self) -> impl Iterator<Item = &DeviceRegistration> {
        self.devices.values()
    }

    pub fn is_registered_submitter(&self, submitter: &str) -> bool {
        submitter
            .strip_prefix("wallet:")
            .and_then(|hex| hex.parse::<Digest>().ok())
            .is_some_and(|tag| self.by_wallet.contains_key(&tag))
    }

    /// `patient_id,device_id,wd_type,zone,wallet_public_tag`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["patient_id", "device_id", "wd_type", "zone", "wallet_public_tag"])?;
        for d in self.devices.values() {
            w.write_record([
                d.patient_id.as_str(),
                d.device_id.as_str(),
                &format!("{:?}", d.wd_type),
                &d.zone.to_string(),
                &d.wallet.public_tag.to_hex(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
