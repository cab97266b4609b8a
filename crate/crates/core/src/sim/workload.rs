use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ChannelSpec, Workload};
use super::network::subsystem_rng;
use crate::gateway::{
    request_for, ContentStore, DeviceRegistration, Enrollment, Gateway, GatewayError, LedgerRecord, PolicyRequest, WdType,
    DECISION_MAGIC, POLICY_MAGIC,
};
use crate::ledger::{Origin, Payload, Telemetry, Transaction, TxKind};
use crate::trust::NodeId;

/// Normal storage band for shipments.
pub const TEMPERATURE_BAND: (f64, f64) = (2.0, 8.0);
pub const HUMIDITY_BAND: (f64, f64) = (30.0, 60.0);

/// Payloads larger than this go to the content store.
pub const INLINE_LIMIT: usize = 1024;

pub fn out_of_band(t: &Telemetry) -> bool {
    !(TEMPERATURE_BAND.0..=TEMPERATURE_BAND.1).contains(&t.temperature_c)
        || !(HUMIDITY_BAND.0..=HUMIDITY_BAND.1).contains(&t.humidity_rh)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InjectedDeviation {
    pub tx_id: u64,
    pub timestamp: u64,
    pub temperature_c: f64,
    pub humidity_rh: f64,
}

/// A wearable reading waiting for its admission decision.
#[derive(Debug, Clone)]
pub struct PendingReading {
    pub request: PolicyRequest,
    pub device: DeviceRegistration,
    pub payload: Vec<u8>,
}

/// Synthetic trial data. All draws come from one labelled stream.
#[derive(Debug, Clone)]
pub struct WorkloadGen {
    rng: ChaCha8Rng,
    next_tx: u64,
    next_request: u64,
}

impl WorkloadGen {
    pub fn new(seed: u64) -> Self {
        WorkloadGen { rng: subsystem_rng(seed, "workload"), next_tx: 1, next_request: 1 }
    }

    pub fn next_tx_id(&mut self) -> u64 {
        let id = self.next_tx;
        self.next_tx += 1;
        id
    }

    pub fn telemetry(
        &mut self,
        wl: &Workload,
        client: NodeId,
        time: u64,
    ) -> (Vec<Transaction>, Vec<InjectedDeviation>) {
        let mut txs = Vec::new();
        let mut injected = Vec::new();
        for k in 0..wl.telemetry_per_round {
            let deviate = self.rng.gen_bool(wl.deviation_rate);
            let reading = if deviate { self.deviation() } else { self.in_band() };
            let tx = Transaction {
                tx_id: self.next_tx_id(),
                origin: Origin::new("-", "depot", &format!("SH{}", k + 1), None),
                kind: TxKind::ShipmentTelemetry,
                submitter: format!("node-{}", client.0),
                payload: Payload::Inline(reading.encode()),
                timestamp: time,
            };
            if deviate {
                injected.push(InjectedDeviation {
                    tx_id: tx.tx_id,
                    timestamp: time,
                    temperature_c: reading.temperature_c,
                    humidity_rh: reading.humidity_rh,
                });
            }
            txs.push(tx);
        }
        (txs, injected)
    }

    fn in_band(&mut self) -> Telemetry {
        Telemetry {
            temperature_c: self.rng.gen_range(2.5..7.5),
            humidity_rh: self.rng.gen_range(35.0..55.0),
        }
    }

    fn deviation(&mut self) -> Telemetry {
        let mut t = self.in_band();
        match self.rng.gen_range(0..4) {
            0 => t.temperature_c = self.rng.gen_range(8.5..15.0),
            1 => t.temperature_c = self.rng.gen_range(-5.0..1.5),
            2 => t.humidity_rh = self.rng.gen_range(61.0..90.0),
            _ => t.humidity_rh = self.rng.gen_range(5.0..29.0),
        }
        t
    }

    pub fn activity(&mut self, wl: &Workload, client: NodeId, round: u64, time: u64) -> Vec<Transaction> {
        (0..wl.activity_events_per_round)
            .map(|k| Transaction {
                tx_id: self.next_tx_id(),
                origin: Origin::new("-", "cro", "-", None),
                kind: TxKind::ProtocolEvent,
                submitter: format!("node-{}", client.0),
                payload: Payload::Inline(format!("round {round} event {k}").into_bytes()),
                timestamp: time,
            })
            .collect()
    }

    /// Enrolls the channel's patients and registers one wearable each.
    pub fn enroll(
        &mut self,
        gateway: &mut Gateway,
        spec: &ChannelSpec,
        wl: &Workload,
        suffix: &str,
        time: u64,
    ) -> Result<Vec<DeviceRegistration>, GatewayError> {
        let mut devices = Vec::new();
        let mut k = 0usize;
        for c in 1..=wl.countries {
            for s in 1..=wl.sites_per_country {
                for p in 1..=wl.patients_per_site {
                    let country = format!("C{c}");
                    let site = format!("C{c}S{s}");
                    let patient_id = format!("C{c}S{s}P{p}{suffix}");
                    gateway.registry.enroll(Enrollment {
                        patient_id: patient_id.clone(),
                        channel: spec.name.clone(),
                        patient_node: NodeId(spec.client),
                        pi_node: spec.pi_node(),
                        country,
                        site,
                    });
                    let wd = WdType::ALL[k % WdType::ALL.len()];
                    k += 1;
                    devices.push(gateway.register_device(&patient_id, &format!("WD-{patient_id}"), wd, time)?);
                }
            }
        }
        Ok(devices)
    }

    /// This round's readings from every device, alternating vitals and lab
    /// results.
    pub fn readings(&mut self, devices: &[DeviceRegistration], wl: &Workload, time: u64) -> Vec<PendingReading> {
        let mut out = Vec::new();
        for device in devices {
            for r in 0..wl.readings_per_patient {
                let kind = if r % 2 == 0 { TxKind::VitalsReading } else { TxKind::LabResult };
                let payload = match kind {
                    TxKind::LabResult if wl.bulk_payload_bytes > 0 => {
                        (0..wl.bulk_payload_bytes).map(|_| self.rng.gen::<u8>()).collect()
                    }
                    TxKind::LabResult => format!("lab:{:.2}", self.rng.gen_range(3.5..5.5)).into_bytes(),
                    _ => format!(
                        "hr:{},spo2:{},ecg:{}",
                        self.rng.gen_range(55..110),
                        self.rng.gen_range(92..100),
                        if self.rng.gen_bool(0.05) { "flag" } else { "ok" }
                    )
                    .into_bytes(),
                };
                let request = request_for(device, self.next_request, kind, time);
                self.next_request += 1;
                out.push(PendingReading { request, device: device.clone(), payload });
            }
        }
        out
    }

    /// The on-chain transaction for a granted reading. Large payloads are
    /// kept off-chain and referenced by digest.
    pub fn reading_tx(&mut self, reading: &PendingReading, store: &mut ContentStore) -> Transaction {
        let d = &reading.device;
        let (country, site) = split_patient(&d.patient_id);
        let payload = if reading.payload.len() > INLINE_LIMIT {
            Payload::Stored(store.put(&reading.payload))
        } else {
            Payload::Inline(reading.payload.clone())
        };
        Transaction {
            tx_id: self.next_tx_id(),
            origin: Origin::new(&country, &site, &d.patient_id, Some(d.zone)),
            kind: reading.request.kind,
            submitter: d.wallet.submitter(),
            payload,
            timestamp: reading.request.time,
        }
    }

    /// Registration, policy, and decision records as transactions.
    pub fn record_tx(&mut self, rec: LedgerRecord) -> Transaction {
        let kind = if rec.payload.starts_with(DECISION_MAGIC) || rec.payload.starts_with(POLICY_MAGIC) {
            TxKind::ProtocolEvent
        } else {
            TxKind::ConsentRecord
        };
        Transaction {
            tx_id: self.next_tx_id(),
            origin: rec.origin,
            kind,
            submitter: rec.submitter,
            payload: Payload::Inline(rec.payload),
            timestamp: rec.time,
        }
    }
}

fn split_patient(patient_id: &str) -> (String, String) {
    let site_end = patient_id.find('P').unwrap_or(patient_id.len());
    let country_end = patient_id.find('S').unwrap_or(site_end);
    (patient_id[..country_end].to_string(), patient_id[..site_end].to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Registry;

    fn wl() -> Workload {
        Workload { telemetry_per_round: 50, deviation_rate: 0.3, ..Workload::default() }
    }

    #[test]
    fn deviations_are_out_of_band_and_recorded() {
        let mut g = WorkloadGen::new(7);
        let (txs, injected) = g.telemetry(&wl(), NodeId(1), 12);
        assert_eq!(txs.len(), 50);
        let flagged: Vec<u64> = txs.iter().filter(|t| out_of_band(&t.telemetry().unwrap())).map(|t| t.tx_id).collect();
        let ids: Vec<u64> = injected.iter().map(|d| d.tx_id).collect();
        assert_eq!(flagged, ids);
        assert!(!ids.is_empty());
        assert!(injected.iter().all(|d| d.timestamp == 12));
    }

    #[test]
    fn same_seed_same_stream() {
        let a = WorkloadGen::new(3).telemetry(&wl(), NodeId(1), 0);
        let b = WorkloadGen::new(3).telemetry(&wl(), NodeId(1), 0);
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn enrollment_and_bulk_offload() {
        let spec = ChannelSpec {
            name: "patient-enrollment".into(),
            active: vec![4, 5, 6],
            client: 6,
            role: super::super::config::ChannelRole::Patient,
            pi: None,
        };
        let w = Workload { countries: 2, sites_per_country: 2, patients_per_site: 2, readings_per_patient: 2, bulk_payload_bytes: 4096, ..Workload::default() };
        let mut gw = Gateway::new(Registry::new());
        let mut g = WorkloadGen::new(1);
        let devices = g.enroll(&mut gw, &spec, &w, "", 0).unwrap();
        assert_eq!(devices.len(), 8);
        assert_eq!(gw.registry.enrollment("C2S1P2").unwrap().pi_node, NodeId(5));
        let readings = g.readings(&devices, &w, 5);
        assert_eq!(readings.len(), 16);
        let lab = readings.iter().find(|r| r.request.kind == TxKind::LabResult).unwrap();
        let tx = g.reading_tx(lab, &mut gw.store);
        let Payload::Stored(d) = tx.payload else { panic!("bulk payload stayed inline") };
        assert_eq!(gw.store.get(&d).unwrap(), lab.payload.as_slice());
        assert_eq!(tx.origin.site, "C1S1");
        assert_eq!(tx.origin.country, "C1");
    }
}
