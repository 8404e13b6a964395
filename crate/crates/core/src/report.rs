//! Evaluation artifacts: canonical JSON, SVG charts and scatter data.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{ConfusionMatrix, Importance};
use crate::pipeline::{EvalReport, ScatterInput};
use crate::rng::{fnv1a64, Rng};
use crate::rules::LogicReport;
use crate::textscore::TextScoreReport;
use crate::{fmt_num, Label};

/// Largest absolute jitter added to a scatter point.
pub const JITTER: f64 = 0.02;

/// Canonical JSON: keys sorted, shortest round-trip floats, pretty-printed
/// with a trailing newline.
pub fn emit_eval_json(report: &EvalReport) -> Result<Vec<u8>> {
    let value = serde_json::to_value(report)?;
    let mut out = serde_json::to_vec_pretty(&value)?;
    out.push(b'\n');
    Ok(out)
}

pub fn parse_eval_json(text: &str) -> Result<EvalReport> {
    Ok(serde_json::from_str(text)?)
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// Annotated 2x2 grid: rows are actual classes, columns predicted classes.
pub fn render_confusion_svg(cm: &ConfusionMatrix, title: &str) -> Result<String> {
    if cm.total() == 0 {
        return Err(Error::UndefinedInput("confusion matrix with no samples"));
    }
    let cells = [[cm.tn, cm.fp], [cm.fn_, cm.tp]];
    let max = cells.iter().flatten().copied().max().unwrap_or(1).max(1) as f64;
    let (x0, y0, size) = (120.0, 70.0, 120.0);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="400" height="360" viewBox="0 0 400 360" font-family="sans-serif">"#
    );
    let _ = writeln!(s, r#"<text x="200" y="30" text-anchor="middle" font-size="16">{}</text>"#, escape(title));
    for (r, row) in cells.iter().enumerate() {
        for (c, &count) in row.iter().enumerate() {
            let x = x0 + c as f64 * size;
            let y = y0 + r as f64 * size;
            let shade = 245.0 - 180.0 * count as f64 / max;
            let fill = format!("rgb({0:.0},{0:.0},255)", shade);
            let ink = if count as f64 / max > 0.6 { "#ffffff" } else { "#000000" };
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{size}" height="{size}" fill="{fill}" stroke="#333333"/>"##
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" font-size="24" fill="{ink}">{count}</text>"#,
                x + size / 2.0,
                y + size / 2.0 + 8.0
            );
        }
    }
    for (i, name) in ["Genuine", "Fake"].iter().enumerate() {
        let centre = x0 + size / 2.0 + i as f64 * size;
        let _ = writeln!(s, r#"<text x="{centre}" y="{}" text-anchor="middle" font-size="14">{name}</text>"#, y0 + 2.0 * size + 22.0);
        let middle = y0 + size / 2.0 + i as f64 * size;
        let _ = writeln!(s, r#"<text x="{}" y="{middle}" text-anchor="end" font-size="14">{name}</text>"#, x0 - 10.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">Predicted</text>"#, x0 + size, y0 + 2.0 * size + 45.0);
    let _ = writeln!(
        s,
        r#"<text x="30" y="{0}" text-anchor="middle" font-size="13" transform="rotate(-90 30 {0})">Actual</text>"#,
        y0 + size
    );
    s.push_str("</svg>\n");
    Ok(s)
}

/// Horizontal bars for the `top_k` most important features, widest first.
/// Widths are proportional to importance, with the top feature at full width.
pub fn render_importance_svg(ranking: &[Importance], top_k: usize) -> Result<String> {
    if ranking.is_empty() || top_k == 0 {
        return Err(Error::UndefinedInput("importance chart with no features"));
    }
    let shown = &ranking[..top_k.min(ranking.len())];
    let max = shown.iter().map(|e| e.value).fold(0.0, f64::max);
    let (label_w, bar_w, row_h) = (220.0, 360.0, 26.0);
    let height = 50.0 + row_h * shown.len() as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{0}" height="{height}" viewBox="0 0 {0} {height}" font-family="sans-serif">"#,
        label_w + bar_w + 80.0
    );
    let _ = writeln!(s, r#"<text x="10" y="24" font-size="16">Feature Importance</text>"#);
    for (i, e) in shown.iter().enumerate() {
        let y = 40.0 + i as f64 * row_h;
        let w = if max > 0.0 { bar_w * e.value / max } else { 0.0 };
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end" font-size="12">{}</text>"#,
            label_w - 8.0,
            y + 15.0,
            escape(&e.feature)
        );
        let _ = writeln!(
            s,
            r##"<rect class="bar" x="{label_w}" y="{y}" width="{w}" height="{}" fill="#4c72b0"/>"##,
            row_h - 6.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11">{}</text>"#,
            label_w + w + 6.0,
            y + 15.0,
            format_args!("{:.3}", e.value)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRow {
    pub respondent_id: String,
    pub text_length_norm: f64,
    pub logic_score: f64,
    pub predicted_label: Label,
    pub jitter_x: f64,
    pub jitter_y: f64,
}

/// Jitter pair in `[-JITTER, JITTER)`, fixed by `(seed, respondent_id)`.
pub fn jitter(seed: u64, respondent_id: &str) -> (f64, f64) {
    let mut rng = Rng::derived(seed, &[fnv1a64(respondent_id.as_bytes())]);
    let x = (2.0 * rng.next_f64() - 1.0) * JITTER;
    let y = (2.0 * rng.next_f64() - 1.0) * JITTER;
    (x, y)
}

pub fn jitter_rows(inputs: &[ScatterInput], seed: u64) -> Vec<ScatterRow> {
    inputs
        .iter()
        .map(|i| {
            let (jitter_x, jitter_y) = jitter(seed, &i.respondent_id);
            ScatterRow {
                respondent_id: i.respondent_id.clone(),
                text_length_norm: i.length_score,
                logic_score: i.logic_score,
                predicted_label: i.predicted_label,
                jitter_x,
                jitter_y,
            }
        })
        .collect()
}

/// Joins per-response scores by position; respondent ids must agree.
pub fn scatter_rows(
    logic: &[LogicReport],
    text: &[TextScoreReport],
    predictions: &[Label],
    seed: u64,
) -> Result<Vec<ScatterRow>> {
    if logic.len() != text.len() || logic.len() != predictions.len() {
        return Err(Error::Misaligned(format!(
            "{} logic reports, {} text reports, {} predictions",
            logic.len(),
            text.len(),
            predictions.len()
        )));
    }
    let inputs = logic
        .iter()
        .zip(text)
        .zip(predictions)
        .map(|((l, t), &p)| {
            if l.respondent_id != t.respondent_id {
                return Err(Error::Misaligned(format!(
                    "logic report `{}` next to text report `{}`",
                    l.respondent_id, t.respondent_id
                )));
            }
            Ok(ScatterInput {
                respondent_id: l.respondent_id.clone(),
                length_score: t.length_score,
                logic_score: l.logic_score,
                predicted_label: p,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(jitter_rows(&inputs, seed))
}

pub fn scatter_csv(rows: &[ScatterRow]) -> Result<Vec<u8>> {
    let to_err = |e: csv::Error| Error::Csv {
        line: 0,
        message: e.to_string(),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "respondent_id",
        "text_length_norm",
        "logic_score",
        "predicted_label",
        "jitter_x",
        "jitter_y",
    ])
    .map_err(to_err)?;
    for r in rows {
        w.write_record([
            r.respondent_id.clone(),
            fmt_num(r.text_length_norm),
            fmt_num(r.logic_score),
            r.predicted_label.as_str().to_string(),
            fmt_num(r.jitter_x),
            fmt_num(r.jitter_y),
        ])
        .map_err(to_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

/// Writes `eval.json`, `confusion_<model>.svg`, `importance.svg` (when any
/// importances exist) and `scatter.csv` into `dir`. Returns the paths written.
pub fn write_report_dir(
    dir: &Path,
    report: &EvalReport,
    scatter: &[ScatterRow],
    top_k: usize,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: String, bytes: &[u8]| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, bytes)?;
        written.push(path);
        Ok(())
    };
    put("eval.json".into(), &emit_eval_json(report)?)?;
    let model = report.model.as_str();
    let title = format!("Confusion Matrix - {model}");
    put(format!("confusion_{model}.svg"), render_confusion_svg(&report.confusion, &title)?.as_bytes())?;
    if !report.importances.is_empty() {
        put("importance.svg".into(), render_importance_svg(&report.importances, top_k)?.as_bytes())?;
    }
    put("scatter.csv".into(), &scatter_csv(scatter)?)?;
    Ok(written)
}
