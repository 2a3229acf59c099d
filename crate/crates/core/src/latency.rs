//! Three-stage packet timestamps and boxplot statistics over their deltas.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LatencyError {
    #[error("seq {seq}: {stage:?} already stamped")]
    Duplicate { seq: u32, stage: Stage },
    #[error("seq {seq}: {stage:?} at {time_ns} ns is out of order with {other:?} at {other_ns} ns")]
    StageRegression {
        seq: u32,
        stage: Stage,
        time_ns: u64,
        other: Stage,
        other_ns: u64,
    },
    #[error("no complete samples")]
    Empty,
    #[error("malformed stats record: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("stats i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Packet handed to the network.
    Ingress = 0,
    /// Packet read from the socket by the twin.
    SocketRecv = 1,
    /// Packet contents applied to the twin state.
    Applied = 2,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Ingress, Stage::SocketRecv, Stage::Applied];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaKind {
    IngressToSocket,
    SocketToApplied,
    IngressToApplied,
}

impl DeltaKind {
    pub const ALL: [DeltaKind; 3] = [
        DeltaKind::IngressToSocket,
        DeltaKind::SocketToApplied,
        DeltaKind::IngressToApplied,
    ];

    fn stages(self) -> (Stage, Stage) {
        match self {
            DeltaKind::IngressToSocket => (Stage::Ingress, Stage::SocketRecv),
            DeltaKind::SocketToApplied => (Stage::SocketRecv, Stage::Applied),
            DeltaKind::IngressToApplied => (Stage::Ingress, Stage::Applied),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageStamp {
    pub seq: u32,
    pub stage: Stage,
    pub time_ns: u64,
}

/// Stamp store keyed by packet sequence number.
#[derive(Debug, Clone, Default)]
pub struct LatencyProbe {
    stamps: BTreeMap<u32, [Option<u64>; 3]>,
}

impl LatencyProbe {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, seq: u32, stage: Stage, time_ns: u64) -> Result<(), LatencyError> {
        let slots = self.stamps.entry(seq).or_default();
        if slots[stage as usize].is_some() {
            return Err(LatencyError::Duplicate { seq, stage });
        }
        for other in Stage::ALL {
            let Some(other_ns) = slots[other as usize] else {
                continue;
            };
            let bad = (other < stage && other_ns > time_ns) || (other > stage && other_ns < time_ns);
            if bad {
                return Err(LatencyError::StageRegression {
                    seq,
                    stage,
                    time_ns,
                    other,
                    other_ns,
                });
            }
        }
        slots[stage as usize] = Some(time_ns);
        Ok(())
    }

    pub fn record_stamp(&mut self, s: StageStamp) -> Result<(), LatencyError> {
        self.record(s.seq, s.stage, s.time_ns)
    }

    pub fn complete_count(&self) -> usize {
        self.stamps.values().filter(|s| s.iter().all(Option::is_some)).count()
    }

    pub fn stamps(&self, seq: u32) -> Option<[Option<u64>; 3]> {
        self.stamps.get(&seq).copied()
    }

    /// Per-seq deltas in ns for seqs that have both stages of `kind`.
    pub fn deltas_ns(&self, kind: DeltaKind) -> Vec<(u32, u64)> {
        let (from, to) = kind.stages();
        self.stamps
            .iter()
            .filter_map(|(&seq, s)| Some((seq, s[to as usize]? - s[from as usize]?)))
            .collect()
    }

    pub fn compute_stats(&self) -> Result<LatencyStats, LatencyError> {
        compute_stats(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindStats {
    pub kind: DeltaKind,
    pub n: usize,
    pub median_ms: f64,
    pub q1_ms: f64,
    pub q3_ms: f64,
    pub iqr_ms: f64,
    pub lower_fence_ms: f64,
    pub upper_fence_ms: f64,
    pub outliers: usize,
    pub min_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    /// Seqs with all three stamps.
    pub n: usize,
    pub kinds: Vec<KindStats>,
}

impl LatencyStats {
    pub fn get(&self, kind: DeltaKind) -> Option<&KindStats> {
        self.kinds.iter().find(|k| k.kind == kind)
    }
}

/// Quantile of sorted data by linear interpolation at rank `(n − 1)·p`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let rank = (sorted.len() - 1) as f64 * p;
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = rank - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Boxplot summary of one set of deltas (ms).
pub fn summarize(kind: DeltaKind, values_ms: &[f64]) -> Result<KindStats, LatencyError> {
    if values_ms.is_empty() {
        return Err(LatencyError::Empty);
    }
    let mut v = values_ms.to_vec();
    v.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&v, 0.25);
    let median = quantile_sorted(&v, 0.5);
    let q3 = quantile_sorted(&v, 0.75);
    let iqr = q3 - q1;
    let lower = q1 - 1.5 * iqr;
    let upper = q3 + 1.5 * iqr;
    Ok(KindStats {
        kind,
        n: v.len(),
        median_ms: median,
        q1_ms: q1,
        q3_ms: q3,
        iqr_ms: iqr,
        lower_fence_ms: lower,
        upper_fence_ms: upper,
        outliers: v.iter().filter(|&&x| x < lower || x > upper).count(),
        min_ms: v[0],
        max_ms: v[v.len() - 1],
    })
}

pub fn compute_stats(probe: &LatencyProbe) -> Result<LatencyStats, LatencyError> {
    let n = probe.complete_count();
    if n == 0 {
        return Err(LatencyError::Empty);
    }
    let kinds = DeltaKind::ALL
        .iter()
        .map(|&kind| {
            let ms: Vec<f64> = probe.deltas_ns(kind).iter().map(|&(_, d)| d as f64 / 1e6).collect();
            summarize(kind, &ms)
        })
        .collect::<Result<_, _>>()?;
    Ok(LatencyStats { n, kinds })
}

/// One JSON object per delta kind, one per line.
pub fn stats_to_jsonl(stats: &LatencyStats) -> Result<String, LatencyError> {
    if stats.kinds.is_empty() {
        return Err(LatencyError::Empty);
    }
    let mut out = String::new();
    for k in &stats.kinds {
        out.push_str(&serde_json::to_string(k)?);
        out.push('\n');
    }
    Ok(out)
}

/// Writes the records to a sibling temp file and renames it into place, so
/// a failed export never leaves a partial file behind.
pub fn export_stats(stats: &LatencyStats, path: &Path) -> Result<(), LatencyError> {
    let text = stats_to_jsonl(stats)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let write = || -> std::io::Result<()> {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        f.sync_all()?;
        std::fs::rename(&tmp, path)
    };
    write().inspect_err(|_| {
        let _ = std::fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn parse_stats(text: &str) -> Result<LatencyStats, LatencyError> {
    let kinds: Vec<KindStats> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()?;
    if kinds.is_empty() {
        return Err(LatencyError::Empty);
    }
    let n = kinds
        .iter()
        .find(|k| k.kind == DeltaKind::IngressToApplied)
        .map_or(0, |k| k.n);
    Ok(LatencyStats { n, kinds })
}

pub fn read_stats(path: &Path) -> Result<LatencyStats, LatencyError> {
    parse_stats(&std::fs::read_to_string(path)?)
}

/// Fixed-width summary table.
pub fn format_table(stats: &LatencyStats) -> String {
    let mut s = format!(
        "{:<20} {:>7} {:>10} {:>10} {:>10} {:>10} {:>9}\n",
        "stage", "n", "median_ms", "q1_ms", "q3_ms", "iqr_ms", "outliers"
    );
    for k in &stats.kinds {
        let name = match k.kind {
            DeltaKind::IngressToSocket => "ingress->socket",
            DeltaKind::SocketToApplied => "socket->applied",
            DeltaKind::IngressToApplied => "ingress->applied",
        };
        s.push_str(&format!(
            "{:<20} {:>7} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>9}\n",
            name, k.n, k.median_ms, k.q1_ms, k.q3_ms, k.iqr_ms, k.outliers
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_stage_deltas() {
        let mut p = LatencyProbe::new();
        let t = 1_000_000_000;
        p.record(1, Stage::Ingress, t).unwrap();
        p.record(1, Stage::SocketRecv, t + 3_600_000).unwrap();
        p.record(1, Stage::Applied, t + 4_680_000).unwrap();
        let s = p.compute_stats().unwrap();
        assert_eq!(s.get(DeltaKind::IngressToSocket).unwrap().median_ms, 3.6);
        assert!((s.get(DeltaKind::SocketToApplied).unwrap().median_ms - 1.08).abs() < 1e-12);
        assert!((s.get(DeltaKind::IngressToApplied).unwrap().median_ms - 4.68).abs() < 1e-12);
    }

    #[test]
    fn incomplete_seq_is_partially_excluded() {
        let mut p = LatencyProbe::new();
        p.record(1, Stage::Ingress, 0).unwrap();
        p.record(1, Stage::SocketRecv, 10).unwrap();
        p.record(1, Stage::Applied, 20).unwrap();
        p.record(2, Stage::Ingress, 0).unwrap();
        p.record(2, Stage::SocketRecv, 30).unwrap();
        let s = p.compute_stats().unwrap();
        assert_eq!(s.n, 1);
        assert_eq!(s.get(DeltaKind::IngressToSocket).unwrap().n, 2);
        assert_eq!(s.get(DeltaKind::SocketToApplied).unwrap().n, 1);
        assert_eq!(s.get(DeltaKind::IngressToApplied).unwrap().n, 1);
    }

    #[test]
    fn duplicates_and_regressions_rejected() {
        let mut p = LatencyProbe::new();
        p.record(1, Stage::SocketRecv, 100).unwrap();
        assert!(matches!(
            p.record(1, Stage::SocketRecv, 100),
            Err(LatencyError::Duplicate { .. })
        ));
        assert!(matches!(
            p.record(1, Stage::Ingress, 101),
            Err(LatencyError::StageRegression { .. })
        ));
        assert!(matches!(
            p.record(1, Stage::Applied, 99),
            Err(LatencyError::StageRegression { .. })
        ));
        p.record(1, Stage::Applied, 100).unwrap();
    }

    #[test]
    fn empty_is_an_error() {
        assert!(matches!(LatencyProbe::new().compute_stats(), Err(LatencyError::Empty)));
    }

    #[test]
    fn quantile_convention() {
        let s = summarize(DeltaKind::IngressToSocket, &[5.0, 3.0, 1.0, 4.0, 2.0]).unwrap();
        assert_eq!((s.median_ms, s.q1_ms, s.q3_ms, s.iqr_ms), (3.0, 2.0, 4.0, 2.0));
        let s = summarize(DeltaKind::IngressToSocket, &[7.0]).unwrap();
        assert_eq!((s.median_ms, s.iqr_ms, s.outliers), (7.0, 0.0, 0));
        let s = summarize(DeltaKind::IngressToSocket, &[3.6; 50]).unwrap();
        assert_eq!((s.median_ms, s.iqr_ms, s.outliers), (3.6, 0.0, 0));
    }

    #[test]
    fn tukey_outliers() {
        let mut v = vec![1.0; 20];
        v.push(100.0);
        let s = summarize(DeltaKind::SocketToApplied, &v).unwrap();
        assert_eq!(s.outliers, 1);
    }

    fn sample_stats() -> LatencyStats {
        let mut p = LatencyProbe::new();
        for seq in 0..50u32 {
            let t = seq as u64 * 16_666_667;
            p.record(seq, Stage::Ingress, t).unwrap();
            p.record(seq, Stage::SocketRecv, t + 3_600_000).unwrap();
            p.record(seq, Stage::Applied, t + 3_600_000 + 500_000 + seq as u64 * 10_000)
                .unwrap();
        }
        p.compute_stats().unwrap()
    }

    #[test]
    fn export_is_deterministic_and_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let stats = sample_stats();
        let a = dir.path().join("a.jsonl");
        let b = dir.path().join("b.jsonl");
        export_stats(&stats, &a).unwrap();
        export_stats(&stats, &b).unwrap();
        let text = std::fs::read_to_string(&a).unwrap();
        assert_eq!(text, std::fs::read_to_string(&b).unwrap());
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_stats(&a).unwrap(), stats);
        assert!(text
            .lines()
            .next()
            .unwrap()
            .starts_with("{\"kind\":\"ingress_to_socket\",\"n\":50,"));
    }

    #[test]
    fn empty_export_leaves_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.jsonl");
        let empty = LatencyStats { n: 0, kinds: vec![] };
        assert!(export_stats(&empty, &path).is_err());
        assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
    }

    #[test]
    fn export_to_missing_dir_fails_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing").join("s.jsonl");
        assert!(matches!(export_stats(&sample_stats(), &path), Err(LatencyError::Io(_))));
    }

    proptest! {
        #[test]
        fn stage_additivity(stamps in proptest::collection::vec((0u64..1_000_000_000, 0u64..50_000_000, 0u64..50_000_000), 1..200)) {
            let mut p = LatencyProbe::new();
            for (seq, (t, d1, d2)) in stamps.iter().enumerate() {
                let seq = seq as u32;
                p.record(seq, Stage::Ingress, *t).unwrap();
                p.record(seq, Stage::SocketRecv, t + d1).unwrap();
                p.record(seq, Stage::Applied, t + d1 + d2).unwrap();
            }
            let a = p.deltas_ns(DeltaKind::IngressToSocket);
            let b = p.deltas_ns(DeltaKind::SocketToApplied);
            let c = p.deltas_ns(DeltaKind::IngressToApplied);
            for ((x, y), z) in a.iter().zip(&b).zip(&c) {
                prop_assert_eq!(x.0, z.0);
                prop_assert_eq!(x.1 + y.1, z.1);
            }
            let s = p.compute_stats().unwrap();
            for k in &s.kinds {
                prop_assert!(k.q1_ms <= k.median_ms && k.median_ms <= k.q3_ms);
                prop_assert!(k.outliers <= k.n);
            }
        }
    }
}
