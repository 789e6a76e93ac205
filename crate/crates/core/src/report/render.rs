use std::fmt::Write as _;

use serde_json::Value;

use super::ComplianceReport;
use crate::finding::Status;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Json,
    Text,
}

pub fn render(report: &ComplianceReport, format: Format) -> Vec<u8> {
    match format {
        Format::Json => render_json(report).into_bytes(),
        Format::Text => render_text(report).into_bytes(),
    }
}

/// Canonical JSON: sorted keys, two-space indent, integers verbatim, floats
/// with 9 significant digits, trailing newline.
pub fn render_json(report: &ComplianceReport) -> String {
    let value = serde_json::to_value(report).expect("report serializes");
    let mut out = String::new();
    write_value(&mut out, &value, 0);
    out.push('\n');
    out
}

/// Canonical rendering of any JSON value (same rules as [`render_json`]).
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value, 0);
    out.push('\n');
    out
}

/// Fixed 9-significant-digit rendering; non-finite values become `null`.
pub fn format_float(x: f64) -> String {
    if !x.is_finite() {
        return "null".to_string();
    }
    if x == 0.0 {
        return "0.00000000".to_string();
    }
    let sci = format!("{x:.8e}");
    let exp: i32 = sci.rsplit_once('e').and_then(|(_, e)| e.parse().ok()).expect("scientific notation");
    let decimals = (8 - exp).max(0) as usize;
    format!("{x:.decimals$}")
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn write_value(out: &mut String, value: &Value, level: usize) {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                out.push_str(&format_float(n.as_f64().expect("f64 number")));
            } else {
                out.push_str(&n.to_string());
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                indent(out, level + 1);
                write_value(out, item, level + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            indent(out, level);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, key) in keys.iter().enumerate() {
                indent(out, level + 1);
                out.push_str(&serde_json::to_string(key).expect("key serializes"));
                out.push_str(": ");
                write_value(out, &map[*key], level + 1);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            indent(out, level);
            out.push('}');
        }
    }
}

fn glyph(status: Status) -> &'static str {
    match status {
        Status::Pass | Status::AttestedPass => "✓",
        Status::NotApplicable => "·",
        Status::Warn => "!",
        Status::ManualPending => "?",
        Status::AttestedFail | Status::Fail => "✗",
    }
}

/// Per-REC table; findings are listed under entries that did not pass.
pub fn render_text(report: &ComplianceReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "dataset:   {}", report.dataset_id);
    let _ = writeln!(out, "generated: {}", report.generated_at);
    let _ = writeln!(out, "tool:      dds {}", report.tool_version);
    out.push('\n');
    let _ = writeln!(out, "{:>3}  {:<1} {:<14} {:<9} TITLE", "REC", "", "STATUS", "MODE");
    for e in &report.entries {
        let mode = serde_json::to_value(e.mode).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        let _ = writeln!(out, "{:>3}  {} {:<14} {:<9} {}", e.rec_id.get(), glyph(e.status), e.status.as_str(), mode, e.title);
        if matches!(e.status, Status::Pass | Status::AttestedPass) {
            continue;
        }
        for f in e.findings.iter().filter(|f| f.status != Status::Pass) {
            let _ = writeln!(out, "       {} {}", glyph(f.status), f.message);
        }
        for n in &e.notes {
            let _ = writeln!(out, "       ? {n}");
        }
        if let Some(a) = &e.attestation {
            if !a.note.is_empty() {
                let _ = writeln!(out, "       {} attested by {}: {}", glyph(a.status.as_status()), a.by, a.note);
            }
        }
    }
    if let Some(notes) = &report.odd_currency_notes {
        let _ = writeln!(out, "\nODD currency: {notes}");
    }
    out.push('\n');
    let counts: Vec<String> = report
        .summary
        .counts
        .iter()
        .filter(|(_, n)| **n > 0)
        .map(|(s, n)| format!("{n} {s}"))
        .collect();
    let _ = writeln!(out, "summary: {} (worst: {}, exit {})", counts.join(", "), report.summary.worst, report.exit_code);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::finding::Finding;
    use crate::report::registry::RecRegistry;
    use crate::report::{assemble, ReportMeta};

    #[test]
    fn float_formatting() {
        assert_eq!(format_float(0.1), "0.100000000");
        assert_eq!(format_float(1.0), "1.00000000");
        assert_eq!(format_float(1234.5), "1234.50000");
        assert_eq!(format_float(0.005_991_464_547_107_98), "0.00599146455");
        assert_eq!(format_float(-2.5), "-2.50000000");
        assert_eq!(format_float(9.999_999_999_9), "10.0000000");
        assert_eq!(format_float(f64::NAN), "null");
        assert_eq!(format_float(0.0), "0.00000000");
    }

    #[test]
    fn json_is_canonical() {
        let f = [Finding::fail(6, "tv").with_metric("tv_distance", 0.1).with_metric("items", 100usize)];
        let r = assemble(&f, &[], &RecRegistry::standard(), &ReportMeta::default()).unwrap();
        let a = render_json(&r);
        assert_eq!(a, render_json(&r));
        assert!(a.contains("\"tv_distance\": 0.100000000"));
        assert!(a.contains("\"items\": 100"));
        assert!(a.contains("\"evidence\": []"));
        let parsed: Value = serde_json::from_str(&a).unwrap();
        assert_eq!(parsed["entries"].as_array().unwrap().len(), 44);
    }

    #[test]
    fn text_has_one_row_per_rec() {
        let r = assemble(&[], &[], &RecRegistry::standard(), &ReportMeta::default()).unwrap();
        let t = render_text(&r);
        assert_eq!(t.lines().filter(|l| l.trim_start().starts_with(|c: char| c.is_ascii_digit()) && l.contains("manual_pending")).count(), 44);
        assert!(t.contains("exit 1"));
    }
}
