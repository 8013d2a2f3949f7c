//! Counting metrics and the dataset evaluation harness.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{read_flow_dir, read_frames_dir, Manifest, ManifestEntry, VideoSource};
use crate::pipeline::{count_video, flows_from_frames, PipelineConfig, VideoInput};
use crate::types::{CycleAnnotation, FlowField, WaveletConfig};
use crate::wavelet::periodogram_count;

fn check_lengths(preds: &[f64], gts: &[f64]) -> Result<()> {
    if preds.is_empty() || preds.len() != gts.len() {
        return Err(Error::Eval(format!(
            "{} predictions for {} ground truths",
            preds.len(),
            gts.len()
        )));
    }
    Ok(())
}

/// Relative absolute error `|ĉ − c|/c` per video.
pub fn relative_errors(preds: &[f64], gts: &[f64]) -> Result<Vec<f64>> {
    check_lengths(preds, gts)?;
    preds
        .iter()
        .zip(gts)
        .map(|(&p, &g)| {
            if g <= 0.0 {
                Err(Error::Eval("ground-truth count must be positive".into()))
            } else {
                Ok((p - g).abs() / g)
            }
        })
        .collect()
}

/// Mean and population standard deviation of the relative absolute error.
pub fn mae(preds: &[f64], gts: &[f64]) -> Result<(f64, f64)> {
    let e = relative_errors(preds, gts)?;
    let n = e.len() as f64;
    let mean = e.iter().sum::<f64>() / n;
    let var = e.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

pub fn within_one(pred: f64, gt: f64) -> bool {
    (pred - gt).abs() <= 1.0
}

/// Fraction of videos predicted within one repetition, inclusive.
pub fn oboa(preds: &[f64], gts: &[f64]) -> Result<f64> {
    check_lengths(preds, gts)?;
    let hits = preds
        .iter()
        .zip(gts)
        .filter(|(&p, &g)| within_one(p, g))
        .count();
    Ok(hits as f64 / preds.len() as f64)
}

/// `(max − min)/mean` of the cycle lengths between consecutive bounds.
pub fn cycle_length_variation(a: &CycleAnnotation) -> Result<f64> {
    let b = a
        .cycle_bounds
        .as_deref()
        .filter(|b| b.len() >= 2)
        .ok_or_else(|| Error::Eval(format!("{}: at least 2 cycle bounds needed", a.video_id)))?;
    let lens: Vec<f64> = b.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    let max = lens.iter().cloned().fold(f64::MIN, f64::max);
    let min = lens.iter().cloned().fold(f64::MAX, f64::min);
    let mean = lens.iter().sum::<f64>() / lens.len() as f64;
    Ok((max - min) / mean)
}

/// How a video's count is predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    #[default]
    Wavelet,
    /// Stationary baseline on the spatially averaged flow component with
    /// the larger variance.
    Periodogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRow {
    pub id: String,
    pub true_count: f64,
    pub predicted_count: Option<f64>,
    pub abs_rel_error: Option<f64>,
    pub off_by_one: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl VideoRow {
    pub fn scored(id: impl Into<String>, true_count: f64, pred: f64) -> Self {
        Self {
            id: id.into(),
            true_count,
            predicted_count: Some(pred),
            abs_rel_error: Some((pred - true_count).abs() / true_count),
            off_by_one: Some(within_one(pred, true_count)),
            error: None,
        }
    }

    pub fn failed(id: impl Into<String>, true_count: f64, error: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            true_count,
            predicted_count: None,
            abs_rel_error: None,
            off_by_one: None,
            error: Some(error.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mae_mean: f64,
    pub mae_std: f64,
    pub oboa: f64,
    pub scored: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub videos: Vec<VideoRow>,
    /// `None` when no video could be scored.
    pub aggregate: Option<Aggregate>,
}

impl EvalReport {
    /// Builds a report, recomputing the aggregate from the scored rows.
    pub fn from_rows(videos: Vec<VideoRow>) -> Self {
        let (preds, gts): (Vec<f64>, Vec<f64>) = videos
            .iter()
            .filter_map(|r| r.predicted_count.map(|p| (p, r.true_count)))
            .unzip();
        let failed = videos.len() - preds.len();
        let aggregate = mae(&preds, &gts).ok().map(|(mae_mean, mae_std)| Aggregate {
            mae_mean,
            mae_std,
            oboa: oboa(&preds, &gts).expect("lengths checked by mae"),
            scored: preds.len(),
            failed,
        });
        Self { videos, aggregate }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// One row per video under a fixed header; failures leave the
    /// prediction columns empty. Aggregates follow as `#` comments.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,true,pred,rel_err,off_by_one\n");
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.videos {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_field(&r.id),
                r.true_count,
                opt(r.predicted_count),
                opt(r.abs_rel_error),
                r.off_by_one.map(|b| b.to_string()).unwrap_or_default()
            ));
        }
        for r in &self.videos {
            if let Some(e) = &r.error {
                out.push_str(&format!("# error {}: {}\n", r.id, e.replace('\n', " ")));
            }
        }
        match &self.aggregate {
            Some(a) => out.push_str(&format!(
                "# mae_mean={} mae_std={} oboa={} scored={} failed={}\n",
                a.mae_mean, a.mae_std, a.oboa, a.scored, a.failed
            )),
            None => out.push_str("# no scored videos\n"),
        }
        out
    }

    /// Parses [`EvalReport::to_csv`] output. Error messages are recovered
    /// from the comments; the aggregate is recomputed.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some("id,true,pred,rel_err,off_by_one") {
            return Err(Error::format("unexpected report CSV header"));
        }
        let mut rows = Vec::new();
        let mut errors = Vec::new();
        for line in lines {
            if let Some(rest) = line.strip_prefix("# error ") {
                if let Some((id, msg)) = rest.split_once(": ") {
                    errors.push((id.to_string(), msg.to_string()));
                }
                continue;
            }
            if line.starts_with('#') || line.is_empty() {
                continue;
            }
            let (id, rest) = split_id(line)?;
            let cols: Vec<&str> = rest.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::format(format!("malformed report row: {line}")));
            }
            let num = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse()
                        .map(Some)
                        .map_err(|_| Error::format(format!("bad number {s:?}")))
                }
            };
            let true_count = num(cols[0])?.ok_or_else(|| Error::format("missing true count"))?;
            let off_by_one = match cols[3] {
                "" => None,
                "true" => Some(true),
                "false" => Some(false),
                other => return Err(Error::format(format!("bad flag {other:?}"))),
            };
            rows.push(VideoRow {
                id,
                true_count,
                predicted_count: num(cols[1])?,
                abs_rel_error: num(cols[2])?,
                off_by_one,
                error: None,
            });
        }
        for (id, msg) in errors {
            if let Some(r) = rows
                .iter_mut()
                .find(|r| r.id == id && r.predicted_count.is_none())
            {
                r.error = Some(msg);
            }
        }
        Ok(Self::from_rows(rows))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn split_id(line: &str) -> Result<(String, &str)> {
    if let Some(rest) = line.strip_prefix('"') {
        let mut id = String::new();
        let mut chars = rest.char_indices().peekable();
        while let Some((i, c)) = chars.next() {
            if c == '"' {
                if matches!(chars.peek(), Some((_, '"'))) {
                    chars.next();
                    id.push('"');
                } else {
                    let tail = rest[i + 1..]
                        .strip_prefix(',')
                        .ok_or_else(|| Error::format("malformed quoted id"))?;
                    return Ok((id, tail));
                }
            } else {
                id.push(c);
            }
        }
        Err(Error::format("unterminated quoted id"))
    } else {
        let (id, rest) = line
            .split_once(',')
            .ok_or_else(|| Error::format(format!("malformed report row: {line}")))?;
        Ok((id.to_string(), rest))
    }
}

fn load_flows(entry: &ManifestEntry, base: &Path, cfg: &PipelineConfig) -> Result<Vec<FlowField>> {
    match &entry.source {
        VideoSource::Flow(dir) => read_flow_dir(&base.join(dir)),
        VideoSource::Frames(dir) => {
            flows_from_frames(&read_frames_dir(&base.join(dir))?, &cfg.flow)
        }
    }
}

/// Spatial mean of `u` and `v` per step; the component with the larger
/// temporal variance is returned.
pub fn mean_flow_signal(flows: &[FlowField]) -> Vec<f64> {
    let pick = |f: fn(&FlowField) -> f64| flows.iter().map(f).collect::<Vec<f64>>();
    let u = pick(|f| f.u().mean_wide());
    let v = pick(|f| f.v().mean_wide());
    let var = |s: &[f64]| {
        let m = s.iter().sum::<f64>() / s.len() as f64;
        s.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
    };
    if var(&u) > var(&v) {
        u
    } else {
        v
    }
}

pub fn predict_entry(
    entry: &ManifestEntry,
    base: &Path,
    cfg: &PipelineConfig,
    estimator: Estimator,
) -> Result<f64> {
    let cfg = PipelineConfig {
        wavelet: WaveletConfig {
            dt: 1.0 / entry.fps,
            ..cfg.wavelet
        },
        ..*cfg
    };
    let flows = load_flows(entry, base, &cfg)?;
    match estimator {
        Estimator::Wavelet => Ok(count_video(VideoInput::Flows(&flows), &cfg)?.count),
        Estimator::Periodogram => Ok(periodogram_count(&mean_flow_signal(&flows), entry.fps)),
    }
}

/// Scores every manifest entry in order; paths resolve against `base`.
/// A failing entry becomes an error row and does not stop the batch.
pub fn run_dataset_with(
    m: &Manifest,
    base: &Path,
    cfg: &PipelineConfig,
    estimator: Estimator,
) -> Result<EvalReport> {
    if m.videos.is_empty() {
        return Err(Error::Eval("empty manifest".into()));
    }
    cfg.validate()?;
    let rows = m
        .videos
        .iter()
        .map(|e| {
            let truth = e.annotation.count as f64;
            match predict_entry(e, base, cfg, estimator) {
                Ok(p) => VideoRow::scored(&e.id, truth, p),
                Err(err) => VideoRow::failed(&e.id, truth, err.to_string()),
            }
        })
        .collect();
    Ok(EvalReport::from_rows(rows))
}

pub fn run_dataset(m: &Manifest, base: &Path, cfg: &PipelineConfig) -> Result<EvalReport> {
    run_dataset_with(m, base, cfg, Estimator::Wavelet)
}
