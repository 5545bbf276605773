//! Static charts and a markdown summary built from the CSV outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::out_file;
use crate::config::AppConfig;
use crate::failure::{input_error, Classify, CmdResult};
use crate::output::write_text;

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn col(&self, name: &str) -> CmdResult<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| input_error(format!("missing column {name}")))
    }
}

fn read_table(path: &Path) -> CmdResult<Option<Table>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(path).input(format!("cannot read {}", path.display()))?;
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r
        .headers()
        .input("csv header")?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
        .collect::<Result<_, _>>()
        .input(format!("cannot parse {}", path.display()))?;
    Ok(Some(Table { header, rows }))
}

fn parse_f(s: &str) -> f64 {
    s.parse().unwrap_or(0.0)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// One small bar panel per metric, bar height = class fraction.
fn distribution_svg(t: &Table) -> CmdResult<String> {
    let (m, c, f) = (t.col("metric")?, t.col("class")?, t.col("fraction")?);
    let mut panels: Vec<(String, Vec<(String, f64)>)> = Vec::new();
    for row in &t.rows {
        if panels.last().is_none_or(|(name, _)| *name != row[m]) {
            panels.push((row[m].clone(), Vec::new()));
        }
        panels
            .last_mut()
            .unwrap()
            .1
            .push((row[c].clone(), parse_f(&row[f])));
    }
    let (pw, ph, bar) = (140.0, 180.0, 24.0);
    let width = pw * panels.len() as f64 + 20.0;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{}\" font-family=\"sans-serif\" font-size=\"11\">\n",
        ph + 40.0
    );
    for (i, (name, bars)) in panels.iter().enumerate() {
        let x0 = 10.0 + i as f64 * pw;
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"15\" font-weight=\"bold\">{}</text>",
            x0 + 4.0,
            escape(name)
        );
        for (j, (label, frac)) in bars.iter().enumerate() {
            let h = frac * (ph - 40.0);
            let x = x0 + 4.0 + j as f64 * (bar + 6.0);
            let y = ph - h;
            let _ = writeln!(
                svg,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{bar}\" height=\"{h:.1}\" fill=\"#4878a8\"/>\
<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\
<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" font-size=\"9\">{:.1}%</text>",
                x + bar / 2.0,
                ph + 14.0,
                escape(label),
                x + bar / 2.0,
                y - 3.0,
                frac * 100.0
            );
        }
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

/// Heatmap of the association matrix, darker = stronger.
fn association_svg(t: &Table) -> String {
    let n = t.rows.len();
    let cell = 48.0;
    let off = 40.0;
    let size = off + cell * n as f64 + 10.0;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{size}\" height=\"{size}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    for (i, row) in t.rows.iter().enumerate() {
        let y = off + i as f64 * cell;
        let _ = writeln!(
            svg,
            "<text x=\"4\" y=\"{:.1}\">{}</text>",
            y + cell / 2.0 + 4.0,
            escape(&row[0])
        );
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>",
            off + i as f64 * cell + cell / 2.0,
            off - 8.0,
            escape(&row[0])
        );
        for (j, v) in row[1..].iter().enumerate() {
            let v = parse_f(v).clamp(0.0, 1.0);
            let shade = (255.0 - v * 200.0).round() as u8;
            let x = off + j as f64 * cell;
            let text = if v > 0.6 { "#fff" } else { "#000" };
            let _ = writeln!(
                svg,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell}\" height=\"{cell}\" fill=\"rgb({shade},{shade},255)\" stroke=\"#fff\"/>\
<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"{text}\">{v:.2}</text>",
                x + cell / 2.0,
                y + cell / 2.0 + 4.0
            );
        }
    }
    svg.push_str("</svg>\n");
    svg
}

fn markdown(t: &Table) -> String {
    let mut md = format!(
        "| {} |\n|{}\n",
        t.header.join(" | "),
        "---|".repeat(t.header.len())
    );
    for row in &t.rows {
        let _ = writeln!(md, "| {} |", row.join(" | "));
    }
    md
}

/// Accuracy with metrics as rows and models as columns.
fn accuracy_pivot(t: &Table) -> CmdResult<Table> {
    let (m, model, acc) = (t.col("metric")?, t.col("model")?, t.col("accuracy")?);
    let mut models: Vec<String> = t.rows.iter().map(|r| r[model].clone()).collect();
    models.sort();
    models.dedup();
    let mut metrics: Vec<String> = Vec::new();
    for r in &t.rows {
        if !metrics.contains(&r[m]) {
            metrics.push(r[m].clone());
        }
    }
    let mut header = vec!["metric".to_string()];
    header.extend(models.iter().cloned());
    let rows = metrics
        .iter()
        .map(|metric| {
            let mut row = vec![metric.clone()];
            for md in &models {
                let cell = t
                    .rows
                    .iter()
                    .find(|r| &r[m] == metric && &r[model] == md)
                    .map(|r| format!("{:.2}", parse_f(&r[acc]) * 100.0))
                    .unwrap_or_default();
                row.push(cell);
            }
            row
        })
        .collect();
    Ok(Table { header, rows })
}

pub fn run(cfg: &AppConfig) -> CmdResult {
    let dir = &cfg.out_dir;
    let mut md = String::from("# vulnscore report\n");
    let mut wrote = Vec::new();

    if let Some(t) = read_table(&dir.join("distribution.csv"))? {
        write_text(&out_file(cfg, "distribution.svg")?, &distribution_svg(&t)?)?;
        wrote.push("distribution.svg");
        md.push_str("\n## Class distribution\n\n![distribution](distribution.svg)\n");
    }
    if let Some(t) = read_table(&dir.join("association.csv"))? {
        write_text(&out_file(cfg, "association.svg")?, &association_svg(&t))?;
        wrote.push("association.svg");
        md.push_str("\n## Metric association (Cramér's V)\n\n![association](association.svg)\n");
    }
    if let Some(t) = read_table(&dir.join("metrics.csv"))? {
        md.push_str("\n## Accuracy (%)\n\n");
        md.push_str(&markdown(&accuracy_pivot(&t)?));
    }
    if let Some(t) = read_table(&dir.join("meta_report.csv"))? {
        md.push_str("\n## Meta-classification (held-out accuracy)\n\n");
        md.push_str(&markdown(&t));
    }
    if let Some(t) = read_table(&dir.join("severity.csv"))? {
        md.push_str("\n## Severity\n\n");
        md.push_str(&markdown(&t));
    }
    if md.lines().count() == 1 {
        return Err(input_error(format!(
            "no analysis outputs found in {}; run analyze/evaluate first",
            dir.display()
        )));
    }
    write_text(&out_file(cfg, "summary.md")?, &md)?;
    wrote.push("summary.md");
    println!("wrote {} -> {}", wrote.join(", "), dir.display());
    Ok(())
}
