//! KPM service-model payloads: function definitions, action definitions and
//! indication reports.
//!
//! Field tables are documented in `docs/sm-kpm.md`. All encodings use the
//! big-endian conventions of [`crate::codec`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::codec::{Reader, WireError, Writer};
use crate::types::{Snssai, TimeMs, UeId, SD_MAX};

/// Conventional RAN function id for KPM.
pub const KPM_RAN_FUNCTION_ID: u16 = 2;

pub const PDCP_SDU_VOLUME_DL: &str = "DRB.PdcpSduVolumeDL";
pub const PDCP_SDU_VOLUME_UL: &str = "DRB.PdcpSduVolumeUL";
pub const RLC_SDU_DELAY_DL: &str = "DRB.RlcSduDelayDl";
pub const UE_THP_DL: &str = "DRB.UEThpDl";
pub const UE_THP_UL: &str = "DRB.UEThpUl";
pub const PRB_TOT_DL: &str = "RRU.PrbTotDl";
pub const PRB_TOT_UL: &str = "RRU.PrbTotUl";

/// Built-in metric vocabulary, in advertisement order.
pub const STANDARD_METRICS: [&str; 7] = [
    PDCP_SDU_VOLUME_DL,
    PDCP_SDU_VOLUME_UL,
    RLC_SDU_DELAY_DL,
    UE_THP_DL,
    UE_THP_UL,
    PRB_TOT_DL,
    PRB_TOT_UL,
];

/// How a metric is measured and aggregated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MetricKind {
    /// Mbps.
    Throughput,
    /// kbit.
    Volume,
    /// ms.
    Delay,
    /// Percent of cell PRBs, in `[0, 100]`.
    PrbPercent,
    /// Scenario-declared extension with no fixed unit.
    Extension,
}

impl MetricKind {
    pub fn of(name: &str) -> MetricKind {
        match name {
            UE_THP_DL | UE_THP_UL => MetricKind::Throughput,
            PDCP_SDU_VOLUME_DL | PDCP_SDU_VOLUME_UL => MetricKind::Volume,
            RLC_SDU_DELAY_DL => MetricKind::Delay,
            PRB_TOT_DL | PRB_TOT_UL => MetricKind::PrbPercent,
            _ => MetricKind::Extension,
        }
    }
}

/// Metric names accepted by strict parsing.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabulary {
    extensions: BTreeSet<String>,
}

impl Vocabulary {
    pub fn standard() -> Self {
        Self::default()
    }

    pub fn with_extensions<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            extensions: names.into_iter().map(Into::into).collect(),
        }
    }

    pub fn contains(&self, name: &str) -> bool {
        STANDARD_METRICS.contains(&name) || self.extensions.contains(name)
    }
}

/// The five KPM REPORT styles, indexed 0..=4 on the wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KpmStyle {
    E2NodeMeasurement = 0,
    SingleUeMeasurement = 1,
    ConditionUeMeasurement = 2,
    CommonConditionUeMeasurement = 3,
    MultiUeMeasurement = 4,
}

impl KpmStyle {
    pub const ALL: [KpmStyle; 5] = [
        KpmStyle::E2NodeMeasurement,
        KpmStyle::SingleUeMeasurement,
        KpmStyle::ConditionUeMeasurement,
        KpmStyle::CommonConditionUeMeasurement,
        KpmStyle::MultiUeMeasurement,
    ];

    pub fn index(self) -> u8 {
        self as u8
    }

    pub fn from_index(i: u8) -> Option<KpmStyle> {
        Self::ALL.get(i as usize).copied()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DefError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("style index {0} out of range")]
    StyleOutOfRange(u8),
    #[error("style indices must be strictly ascending")]
    StyleOrder,
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("metric {0:?} listed twice in one style")]
    DuplicateMetric(String),
}

/// Metrics a node exposes per REPORT style.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KpmFunctionDefinition {
    pub styles: BTreeMap<KpmStyle, Vec<String>>,
}

impl KpmFunctionDefinition {
    /// Every style present; only the common-condition UE-level style carries
    /// the standard metrics.
    pub fn standard() -> Self {
        let mut styles: BTreeMap<_, _> = KpmStyle::ALL.iter().map(|s| (*s, Vec::new())).collect();
        styles.insert(
            KpmStyle::CommonConditionUeMeasurement,
            STANDARD_METRICS.iter().map(|m| m.to_string()).collect(),
        );
        Self { styles }
    }

    pub fn metrics(&self, style: KpmStyle) -> &[String] {
        self.styles.get(&style).map(Vec::as_slice).unwrap_or(&[])
    }

    fn validate(&self, vocab: &Vocabulary) -> Result<(), DefError> {
        for metrics in self.styles.values() {
            let mut seen = BTreeSet::new();
            for m in metrics {
                if !vocab.contains(m) {
                    return Err(DefError::UnknownMetric(m.clone()));
                }
                if !seen.insert(m.as_str()) {
                    return Err(DefError::DuplicateMetric(m.clone()));
                }
            }
        }
        Ok(())
    }
}

/// Renders as `{0: [], ..., 3: ['DRB.PdcpSduVolumeDL', ...], 4: []}`.
impl fmt::Display for KpmFunctionDefinition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (style, metrics)) in self.styles.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{}: [", style.index())?;
            for (j, m) in metrics.iter().enumerate() {
                if j > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "'{m}'")?;
            }
            f.write_str("]")?;
        }
        f.write_str("}")
    }
}

pub fn build_kpm_function_definition(
    def: &KpmFunctionDefinition,
    vocab: &Vocabulary,
) -> Result<Vec<u8>, DefError> {
    def.validate(vocab)?;
    let mut out = Vec::new();
    let mut w = Writer::new(&mut out);
    w.u8(def.styles.len() as u8);
    for (style, metrics) in &def.styles {
        w.u8(style.index());
        w.u16(u16::try_from(metrics.len()).map_err(|_| WireError::TooLong("metric list"))?);
        for m in metrics {
            w.str8(m)?;
        }
    }
    Ok(out)
}

/// Strict parse: every metric must be in `vocab`.
pub fn parse_kpm_function_definition(
    bytes: &[u8],
    vocab: &Vocabulary,
) -> Result<KpmFunctionDefinition, DefError> {
    let mut r = Reader::new(bytes);
    let count = r.u8()?;
    let mut styles = BTreeMap::new();
    let mut last: Option<u8> = None;
    for _ in 0..count {
        let idx = r.u8()?;
        let style = KpmStyle::from_index(idx).ok_or(DefError::StyleOutOfRange(idx))?;
        if last.is_some_and(|l| idx <= l) {
            return Err(DefError::StyleOrder);
        }
        last = Some(idx);
        let n = r.u16()?;
        let mut metrics = Vec::with_capacity(n.min(64) as usize);
        for _ in 0..n {
            metrics.push(r.str8()?);
        }
        styles.insert(style, metrics);
    }
    r.finish()?;
    let def = KpmFunctionDefinition { styles };
    def.validate(vocab)?;
    Ok(def)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ActionError {
    #[error("action definition lists no metrics")]
    EmptyMetrics,
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("style index {0} out of range")]
    BadStyle(u8),
    #[error("slice presence flag must be 0 or 1, got {0}")]
    BadFlag(u8),
    #[error("slice differentiator exceeds 24 bits")]
    BadSd,
}

/// What a subscriber asks a node to measure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KpmActionDefinition {
    pub style: KpmStyle,
    pub metrics: Vec<String>,
    pub granularity_ms: u32,
    pub snssai: Option<Snssai>,
}

pub fn build_kpm_action(def: &KpmActionDefinition) -> Result<Vec<u8>, ActionError> {
    if def.metrics.is_empty() {
        return Err(ActionError::EmptyMetrics);
    }
    let mut out = Vec::new();
    let mut w = Writer::new(&mut out);
    w.u8(def.style.index());
    w.u32(def.granularity_ms);
    match def.snssai {
        Some(s) => {
            if s.sd > SD_MAX {
                return Err(ActionError::BadSd);
            }
            w.u8(1);
            w.u8(s.sst);
            w.u24(s.sd);
        }
        None => w.u8(0),
    }
    w.u16(u16::try_from(def.metrics.len()).map_err(|_| WireError::TooLong("metric list"))?);
    for m in &def.metrics {
        w.str8(m)?;
    }
    Ok(out)
}

pub fn decode_kpm_action(bytes: &[u8]) -> Result<KpmActionDefinition, ActionError> {
    let mut r = Reader::new(bytes);
    let idx = r.u8()?;
    let style = KpmStyle::from_index(idx).ok_or(ActionError::BadStyle(idx))?;
    let granularity_ms = r.u32()?;
    let snssai = match r.u8()? {
        0 => None,
        1 => {
            let sst = r.u8()?;
            let sd = r.u24()?;
            Some(Snssai { sst, sd })
        }
        other => return Err(ActionError::BadFlag(other)),
    };
    let n = r.u16()?;
    if n == 0 {
        return Err(ActionError::EmptyMetrics);
    }
    let mut metrics = Vec::with_capacity(n.min(64) as usize);
    for _ in 0..n {
        metrics.push(r.str8()?);
    }
    r.finish()?;
    Ok(KpmActionDefinition {
        style,
        metrics,
        granularity_ms,
        snssai,
    })
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReportError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("record for {ue} carries {got} values for {expected} metrics")]
    Arity { ue: String, expected: usize, got: usize },
    #[error("{metric} = {value} outside its valid range")]
    Range { metric: String, value: f64 },
}

/// One UE's measurements over a report window.
#[derive(Clone, Debug, PartialEq)]
pub struct KpmRecord {
    pub ue_id: UeId,
    pub snssai: Snssai,
    /// One value per entry of [`KpmReport::metrics`], in the same order.
    pub values: Vec<f64>,
}

/// Measurements for one subscription window.
#[derive(Clone, Debug, PartialEq)]
pub struct KpmReport {
    pub window_start_ms: TimeMs,
    pub granularity_ms: u32,
    pub metrics: Vec<String>,
    pub records: Vec<KpmRecord>,
}

impl KpmReport {
    pub fn window_end_ms(&self) -> TimeMs {
        self.window_start_ms + self.granularity_ms as TimeMs
    }

    pub fn metric_index(&self, metric: &str) -> Option<usize> {
        self.metrics.iter().position(|m| m == metric)
    }

    /// Value of `metric` for `ue`, if both are present.
    pub fn value(&self, ue: &UeId, metric: &str) -> Option<f64> {
        let i = self.metric_index(metric)?;
        self.records
            .iter()
            .find(|r| &r.ue_id == ue)
            .map(|r| r.values[i])
    }

    /// Sum of `metric` over every record.
    pub fn total(&self, metric: &str) -> Option<f64> {
        let i = self.metric_index(metric)?;
        Some(self.records.iter().map(|r| r.values[i]).sum())
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        for rec in &self.records {
            if rec.values.len() != self.metrics.len() {
                return Err(ReportError::Arity {
                    ue: rec.ue_id.to_string(),
                    expected: self.metrics.len(),
                    got: rec.values.len(),
                });
            }
            for (m, &v) in self.metrics.iter().zip(&rec.values) {
                let upper = match MetricKind::of(m) {
                    MetricKind::PrbPercent => 100.0,
                    _ => f64::INFINITY,
                };
                if !(v.is_finite() && (0.0..=upper).contains(&v)) {
                    return Err(ReportError::Range {
                        metric: m.clone(),
                        value: v,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Encodes a report into (indication header, indication message).
pub fn build_kpm_report(report: &KpmReport) -> Result<(Vec<u8>, Vec<u8>), ReportError> {
    report.validate()?;
    let mut header = Vec::new();
    let mut w = Writer::new(&mut header);
    w.u64(report.window_start_ms);
    w.u32(report.granularity_ms);
    w.u16(u16::try_from(report.metrics.len()).map_err(|_| WireError::TooLong("metric list"))?);
    for m in &report.metrics {
        w.str8(m)?;
    }

    let mut message = Vec::new();
    let mut w = Writer::new(&mut message);
    w.u32(u32::try_from(report.records.len()).map_err(|_| WireError::TooLong("record list"))?);
    for rec in &report.records {
        w.str8(rec.ue_id.as_str())?;
        w.u8(rec.snssai.sst);
        w.u24(rec.snssai.sd);
        w.u16(rec.values.len() as u16);
        for v in &rec.values {
            w.f64(*v);
        }
    }
    Ok((header, message))
}

pub fn decode_kpm_report(header: &[u8], message: &[u8]) -> Result<KpmReport, ReportError> {
    let mut r = Reader::new(header);
    let window_start_ms = r.u64()?;
    let granularity_ms = r.u32()?;
    let n = r.u16()?;
    let mut metrics = Vec::with_capacity(n.min(64) as usize);
    for _ in 0..n {
        metrics.push(r.str8()?);
    }
    r.finish()?;

    let mut r = Reader::new(message);
    let count = r.u32()?;
    let mut records = Vec::new();
    for _ in 0..count {
        let ue_id = UeId(r.str8()?);
        let sst = r.u8()?;
        let sd = r.u24()?;
        let got = r.u16()? as usize;
        if got != metrics.len() {
            return Err(ReportError::Arity {
                ue: ue_id.0,
                expected: metrics.len(),
                got,
            });
        }
        let values = (0..got).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        records.push(KpmRecord {
            ue_id,
            snssai: Snssai { sst, sd },
            values,
        });
    }
    r.finish()?;
    let report = KpmReport {
        window_start_ms,
        granularity_ms,
        metrics,
        records,
    };
    report.validate()?;
    Ok(report)
}

/// Per-slice view of a report: volumes, throughputs and PRB shares are
/// summed over UEs, delays are averaged.
pub fn aggregate_by_slice(report: &KpmReport) -> BTreeMap<Snssai, Vec<(String, f64)>> {
    let mut sums: BTreeMap<Snssai, (Vec<f64>, usize)> = BTreeMap::new();
    for rec in &report.records {
        let entry = sums
            .entry(rec.snssai)
            .or_insert_with(|| (vec![0.0; report.metrics.len()], 0));
        for (acc, v) in entry.0.iter_mut().zip(&rec.values) {
            *acc += v;
        }
        entry.1 += 1;
    }
    sums.into_iter()
        .map(|(slice, (totals, n))| {
            let values = report
                .metrics
                .iter()
                .zip(totals)
                .map(|(m, t)| {
                    let v = match MetricKind::of(m) {
                        MetricKind::Delay => t / n as f64,
                        _ => t,
                    };
                    (m.clone(), v)
                })
                .collect();
            (slice, values)
        })
        .collect()
}
