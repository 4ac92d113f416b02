//! Proptest generators for envelopes and service-model payloads.

use e2loop::codec::{Envelope, MsgType};
use e2loop::kpm::{KpmActionDefinition, KpmRecord, KpmReport, KpmStyle, MetricKind, STANDARD_METRICS};
use e2loop::rc::{PrbQuota, QosFlowMapParams, RcControlAction, RcParams, RcStyle, RcTarget};
use e2loop::types::{Snssai, SD_MAX};
use proptest::prelude::*;

pub fn msg_type() -> impl Strategy<Value = MsgType> {
    prop::sample::select(MsgType::ALL.to_vec())
}

pub fn envelope() -> impl Strategy<Value = Envelope> {
    (msg_type(), any::<u32>(), any::<u16>(), prop::collection::vec(any::<u8>(), 0..600))
        .prop_map(|(t, tid, rf, body)| Envelope::new(t, tid, rf, body))
}

pub fn snssai() -> impl Strategy<Value = Snssai> {
    (any::<u8>(), 0..=SD_MAX).prop_map(|(sst, sd)| Snssai::new(sst, sd))
}

fn id() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9-]{0,15}"
}

pub fn kpm_style() -> impl Strategy<Value = KpmStyle> {
    (0u8..5).prop_map(|i| KpmStyle::from_index(i).unwrap())
}

fn metrics() -> impl Strategy<Value = Vec<String>> {
    prop::sample::subsequence(STANDARD_METRICS.to_vec(), 1..=STANDARD_METRICS.len())
        .prop_map(|m| m.into_iter().map(str::to_string).collect())
}

pub fn kpm_action() -> impl Strategy<Value = KpmActionDefinition> {
    (kpm_style(), metrics(), any::<u32>(), prop::option::of(snssai())).prop_map(
        |(style, metrics, granularity_ms, snssai)| KpmActionDefinition {
            style,
            metrics,
            granularity_ms,
            snssai,
        },
    )
}

pub fn kpm_report() -> impl Strategy<Value = KpmReport> {
    (metrics(), any::<u32>(), 1u32..60_000).prop_flat_map(|(metrics, start, granularity_ms)| {
        let kinds: Vec<MetricKind> = metrics.iter().map(|m| MetricKind::of(m)).collect();
        let record = (
            id(),
            snssai(),
            kinds
                .iter()
                .map(|k| match k {
                    MetricKind::PrbPercent => (0.0f64..=100.0).boxed(),
                    _ => (0.0f64..1.0e7).boxed(),
                })
                .collect::<Vec<_>>(),
        )
            .prop_map(|(ue, snssai, values)| KpmRecord {
                ue_id: ue.into(),
                snssai,
                values,
            });
        prop::collection::vec(record, 0..6).prop_map(move |records| KpmReport {
            window_start_ms: start as u64,
            granularity_ms,
            metrics: metrics.clone(),
            records,
        })
    })
}

pub fn prb_quota() -> impl Strategy<Value = PrbQuota> {
    (0u8..=100, 0u8..=100, 0u8..=100).prop_map(|(a, b, c)| {
        let mut v = [a, b, c];
        v.sort();
        PrbQuota::new(v[0], v[1], v[2]).unwrap()
    })
}

pub fn rc_action() -> impl Strategy<Value = RcControlAction> {
    prop_oneof![
        (id(), 1u8..=255, any::<u8>(), any::<u8>()).prop_map(|(ue, drb_id, five_qi, priority)| RcControlAction {
            style: RcStyle::Rbc,
            action_id: RcStyle::Rbc.action_id(),
            target: RcTarget::Ue(ue.into()),
            params: RcParams::QosFlowMap(QosFlowMapParams {
                drb_id,
                five_qi,
                priority
            }),
        }),
        (id(), snssai(), prb_quota()).prop_map(|(cell, snssai, q)| RcControlAction {
            style: RcStyle::Rrac,
            action_id: RcStyle::Rrac.action_id(),
            target: RcTarget::Slice {
                cell_id: cell.into(),
                snssai
            },
            params: RcParams::PrbQuota(q),
        }),
        (id(), id()).prop_map(|(ue, cell)| RcControlAction {
            style: RcStyle::Cmmc,
            action_id: RcStyle::Cmmc.action_id(),
            target: RcTarget::Handover {
                ue_id: ue.into(),
                target_cell_id: cell.into()
            },
            params: RcParams::Handover,
        }),
    ]
}
