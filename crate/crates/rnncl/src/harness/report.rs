//! Report emission: CSV summaries, JSON run records, and standalone SVG
//! accuracy charts, plus the directory plumbing the CLI's `report`
//! subcommand uses to collect records.

use std::path::Path;

use crate::error::{Error, Result};

use super::experiment::{during_final_metrics, RunRecord, RunStatus};

pub const CSV_HEADER: &str = "method,variant,k_tasks,p,i,r,seed,during,final,wall_s,status";

/// One line per record under a fixed header. Failed runs keep their row —
/// with an explicit status and *no* accuracy numbers — so a report never
/// silently absorbs partial results.
pub fn csv_string(records: &[RunRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let (during, fin) = match during_final_metrics(r) {
            Ok((d, f)) => (format!("{:.6}", d), format!("{:.6}", f)),
            Err(_) => (String::new(), String::new()),
        };
        let status = match &r.status {
            RunStatus::Ok => "ok".to_string(),
            RunStatus::Failed { task, iter, .. } => format!("failed@task{}iter{}", task, iter),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{:.3},{}\n",
            r.method, r.variant, r.k_tasks, r.p, r.i, r.r, r.seed, during, fin, r.wall_s, status
        ));
    }
    out
}

/// Canonical JSON for one record: pretty-printed, trailing newline. Field
/// order follows the struct, and the wall clock is skipped, so identical
/// runs serialize byte-identically.
pub fn record_json(record: &RunRecord) -> Result<String> {
    let mut s = serde_json::to_string_pretty(record)
        .map_err(|e| Error::Invalid(format!("serialize record: {}", e)))?;
    s.push('\n');
    Ok(s)
}

pub fn records_json(records: &[RunRecord]) -> Result<String> {
    let mut s = serde_json::to_string_pretty(records)
        .map_err(|e| Error::Invalid(format!("serialize records: {}", e)))?;
    s.push('\n');
    Ok(s)
}

pub fn parse_record(text: &str) -> Result<RunRecord> {
    serde_json::from_str(text).map_err(|e| Error::Invalid(format!("parse record: {}", e)))
}

/// Load every `*.json` run record under `dir`, sorted by file name so the
/// report order is stable. Files holding an array contribute all entries.
/// The tool's own non-record artifacts (`grid.json`, `report.json`) are
/// skipped by name; anything else that fails to parse is an error.
pub fn read_records_dir(dir: &Path) -> Result<Vec<RunRecord>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().map(|x| x == "json").unwrap_or(false))
        .filter(|p| {
            !matches!(
                p.file_name().and_then(|n| n.to_str()),
                Some("grid.json") | Some("report.json")
            )
        })
        .collect();
    paths.sort();
    let mut records = Vec::new();
    for path in paths {
        let text = std::fs::read_to_string(&path)?;
        let trimmed = text.trim_start();
        if trimmed.starts_with('[') {
            let many: Vec<RunRecord> = serde_json::from_str(&text)
                .map_err(|e| Error::Invalid(format!("{}: {}", path.display(), e)))?;
            records.extend(many);
        } else {
            records.push(
                serde_json::from_str(&text)
                    .map_err(|e| Error::Invalid(format!("{}: {}", path.display(), e)))?,
            );
        }
    }
    Ok(records)
}

// ── svg ──────────────────────────────────────────────────────────────────

const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
    "#7f7f7f", "#bcbd22",
];

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Mean accuracy over the tasks learned so far, after each task — the
/// forgetting curve — one polyline per method, averaged over that
/// method's successful records.
pub fn svg_accuracy_chart(records: &[RunRecord]) -> String {
    let ok: Vec<&RunRecord> = records.iter().filter(|r| r.is_ok() && !r.acc.is_empty()).collect();
    let k_max = ok.iter().map(|r| r.k_tasks).max().unwrap_or(0);

    // method -> per-task-index (sum, count)
    let mut methods: Vec<(String, Vec<(f64, usize)>)> = Vec::new();
    for r in &ok {
        let entry = match methods.iter_mut().find(|(m, _)| *m == r.method) {
            Some(e) => e,
            None => {
                methods.push((r.method.clone(), vec![(0.0, 0); k_max]));
                methods.last_mut().expect("just pushed")
            }
        };
        for j in 0..r.k_tasks {
            let mut sum = 0.0;
            let mut n = 0;
            for k in 0..=j {
                if let Ok(a) = r.a(k, j) {
                    sum += a;
                    n += 1;
                }
            }
            if n > 0 {
                entry.1[j].0 += sum / n as f64;
                entry.1[j].1 += 1;
            }
        }
    }

    let (w, h) = (640.0, 400.0);
    let (left, right, top, bottom) = (60.0, 160.0, 30.0, 50.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let x_of = |j: usize| {
        if k_max <= 1 {
            left + plot_w / 2.0
        } else {
            left + plot_w * j as f64 / (k_max - 1) as f64
        }
    };
    let y_of = |acc: f64| top + plot_h * (1.0 - acc.clamp(0.0, 1.0));

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {} {}\" font-family=\"sans-serif\" font-size=\"12\">\n",
        w, h
    ));
    s.push_str(&format!(
        "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
        w, h
    ));
    // Axes and gridlines at 0.25 steps.
    for i in 0..=4 {
        let acc = i as f64 * 0.25;
        let y = y_of(acc);
        s.push_str(&format!(
            "<line x1=\"{}\" y1=\"{:.1}\" x2=\"{}\" y2=\"{:.1}\" stroke=\"#ddd\"/>\n",
            left,
            y,
            left + plot_w,
            y
        ));
        s.push_str(&format!(
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{:.2}</text>\n",
            left - 8.0,
            y + 4.0,
            acc
        ));
    }
    for j in 0..k_max {
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            x_of(j),
            h - bottom + 20.0,
            j + 1
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">tasks trained</text>\n",
        left + plot_w / 2.0,
        h - 10.0
    ));
    s.push_str(&format!(
        "<text x=\"18\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">mean accuracy</text>\n",
        top + plot_h / 2.0,
        top + plot_h / 2.0
    ));

    for (mi, (method, sums)) in methods.iter().enumerate() {
        let color = PALETTE[mi % PALETTE.len()];
        let pts: Vec<String> = sums
            .iter()
            .enumerate()
            .filter(|(_, (_, n))| *n > 0)
            .map(|(j, (sum, n))| format!("{:.2},{:.2}", x_of(j), y_of(sum / *n as f64)))
            .collect();
        if !pts.is_empty() {
            s.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n",
                pts.join(" "),
                color
            ));
        }
        let ly = top + 16.0 * mi as f64;
        s.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            w - right + 10.0,
            ly,
            w - right + 34.0,
            ly,
            color
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\">{}</text>\n",
            w - right + 40.0,
            ly + 4.0,
            esc(method)
        ));
    }
    s.push_str("</svg>\n");
    s
}

/// A second chart kind: any named scalar per record (e.g. mean Fisher)
/// against a chosen x value, one polyline, points in x order.
pub fn svg_scalar_chart(title: &str, points: &[(f64, f64)]) -> String {
    let (w, h) = (480.0, 320.0);
    let (left, top, right, bottom) = (70.0, 40.0, 20.0, 50.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        y_min = y_min.min(y);
        y_max = y_max.max(y);
    }
    if points.is_empty() {
        x_min = 0.0;
        x_max = 1.0;
        y_min = 0.0;
        y_max = 1.0;
    }
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    if y_max == y_min {
        y_max = y_min + 1.0;
    }
    let x_of = |x: f64| left + plot_w * (x - x_min) / (x_max - x_min);
    let y_of = |y: f64| top + plot_h * (1.0 - (y - y_min) / (y_max - y_min));

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {} {}\" font-family=\"sans-serif\" font-size=\"12\">\n",
        w, h
    ));
    s.push_str(&format!("<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n", w, h));
    s.push_str(&format!("<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{}</text>\n", w / 2.0, esc(title)));
    s.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333\"/>\n",
        left,
        top + plot_h,
        left + plot_w,
        top + plot_h
    ));
    s.push_str(&format!(
        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333\"/>\n",
        left, top, left, top + plot_h
    ));
    for &(x, y) in points {
        s.push_str(&format!(
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\"/>\n",
            x_of(x),
            y_of(y),
            PALETTE[0]
        ));
        s.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n",
            x_of(x),
            h - bottom + 20.0,
            x
        ));
    }
    if points.len() > 1 {
        let pts: Vec<String> =
            points.iter().map(|&(x, y)| format!("{:.2},{:.2}", x_of(x), y_of(y))).collect();
        s.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            pts.join(" "),
            PALETTE[0]
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{:.3}</text>\n",
        left - 6.0,
        top + 4.0,
        y_max
    ));
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{:.3}</text>\n",
        left - 6.0,
        top + plot_h + 4.0,
        y_min
    ));
    s.push_str("</svg>\n");
    s
}

/// Minimal well-formedness check used by tests and by `report` before it
/// writes an SVG: tags balance, attributes stay quoted, one root element.
pub fn is_well_formed_xml(text: &str) -> bool {
    let bytes = text.as_bytes();
    let mut i = 0;
    let mut stack: Vec<String> = Vec::new();
    let mut seen_root = false;
    while i < bytes.len() {
        if bytes[i] != b'<' {
            if stack.is_empty() && !bytes[i].is_ascii_whitespace() && seen_root {
                return false; // text after the root closed
            }
            if stack.is_empty() && !bytes[i].is_ascii_whitespace() && !seen_root {
                return false; // text before the root opened
            }
            i += 1;
            continue;
        }
        // A tag starts. Comments and declarations skip to their ends.
        if text[i..].starts_with("<!--") {
            match text[i + 4..].find("-->") {
                Some(end) => {
                    i += 4 + end + 3;
                    continue;
                }
                None => return false,
            }
        }
        if text[i..].starts_with("<?") {
            match text[i + 2..].find("?>") {
                Some(end) => {
                    i += 2 + end + 2;
                    continue;
                }
                None => return false,
            }
        }
        let close = match text[i..].find('>') {
            Some(c) => i + c,
            None => return false,
        };
        let inner = &text[i + 1..close];
        // Quotes must balance inside the tag.
        if inner.bytes().filter(|&b| b == b'"').count() % 2 != 0 {
            return false;
        }
        if let Some(name) = inner.strip_prefix('/') {
            match stack.pop() {
                Some(open) if open == name.trim() => {}
                _ => return false,
            }
        } else {
            let self_closing = inner.ends_with('/');
            let body = if self_closing { &inner[..inner.len() - 1] } else { inner };
            let name = body.split_whitespace().next().unwrap_or("");
            if name.is_empty() {
                return false;
            }
            if stack.is_empty() {
                if seen_root {
                    return false; // second root element
                }
                seen_root = true;
            }
            if !self_closing {
                stack.push(name.to_string());
            }
        }
        i = close + 1;
    }
    stack.is_empty() && seen_root
}

/// Write `report.csv` / `report.json` / `report.svg` into `dir` for the
/// chosen format; returns the written path.
pub fn emit_report(records: &[RunRecord], dir: &Path, format: &str) -> Result<std::path::PathBuf> {
    std::fs::create_dir_all(dir)?;
    let (name, content) = match format {
        "csv" => ("report.csv".to_string(), csv_string(records)),
        "json" => ("report.json".to_string(), records_json(records)?),
        "svg" => {
            let svg = svg_accuracy_chart(records);
            if !is_well_formed_xml(&svg) {
                return Err(Error::Invalid("generated SVG failed the well-formedness check".into()));
            }
            ("report.svg".to_string(), svg)
        }
        other => return Err(Error::Config(format!("unknown report format {:?}", other))),
    };
    let path = dir.join(name);
    std::fs::write(&path, content)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok_record(method: &str, seed: u64) -> RunRecord {
        RunRecord {
            method: method.into(),
            variant: "permuted".into(),
            k_tasks: 2,
            p: 5,
            i: 5,
            r: 1,
            seed,
            config_hash: format!("{:016x}", seed),
            status: RunStatus::Ok,
            acc: vec![vec![0.9, 0.8], vec![1.0]],
            consolidations: 1,
            wall_s: 0.0,
        }
    }

    fn failed_record() -> RunRecord {
        RunRecord {
            status: RunStatus::Failed { task: 1, iter: 42, what: "loss went non-finite".into() },
            acc: Vec::new(),
            ..ok_record("replay", 9)
        }
    }

    #[test]
    fn empty_report_is_just_the_header() {
        assert_eq!(csv_string(&[]), format!("{}\n", CSV_HEADER));
    }

    #[test]
    fn csv_rows_match_records_and_failures_carry_no_numbers() {
        let mut timed = ok_record("ewc", 1);
        timed.wall_s = 1.234;
        let records = [timed, failed_record()];
        let csv = csv_string(&records);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], CSV_HEADER);
        assert!(lines[1].starts_with("ewc,permuted,2,5,5,1,1,0.950000,0.900000,"));
        assert!(lines[1].ends_with(",ok"));
        assert!(lines[2].starts_with("replay,permuted,2,5,5,1,9,,,"));
        assert!(lines[2].ends_with(",failed@task1iter42"));
    }

    #[test]
    fn record_json_is_deterministic_and_round_trips() {
        let r = ok_record("hnet", 5);
        let a = record_json(&r).unwrap();
        let b = record_json(&r).unwrap();
        assert_eq!(a.as_bytes(), b.as_bytes());
        assert!(a.ends_with('\n'));
        let back = parse_record(&a).unwrap();
        assert_eq!(back, r);
        // The wall clock stays out of the serialized form.
        assert!(!a.contains("wall_s"));
        assert_eq!(back.wall_s, 0.0);
    }

    #[test]
    fn records_dir_reads_single_objects_and_arrays_in_name_order() {
        let dir = tempfile::tempdir().unwrap();
        let a = ok_record("ewc", 1);
        let b = ok_record("si", 2);
        let c = ok_record("hnet", 3);
        std::fs::write(dir.path().join("b_pair.json"), records_json(&[b.clone(), c.clone()]).unwrap())
            .unwrap();
        std::fs::write(dir.path().join("a_single.json"), record_json(&a).unwrap()).unwrap();
        std::fs::write(dir.path().join("notes.txt"), "ignored").unwrap();
        let records = read_records_dir(dir.path()).unwrap();
        assert_eq!(records, vec![a, b, c]);
    }

    #[test]
    fn accuracy_chart_is_well_formed_and_labels_methods() {
        let records = [ok_record("ewc", 1), ok_record("finetune", 2), failed_record()];
        let svg = svg_accuracy_chart(&records);
        assert!(is_well_formed_xml(&svg));
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("ewc") && svg.contains("finetune"));
        // Failed runs contribute no curve.
        assert!(!svg.contains("replay"));
    }

    #[test]
    fn scalar_chart_is_well_formed_even_when_empty() {
        let svg = svg_scalar_chart("mean recurrent Fisher vs p", &[(5.0, 0.1), (10.0, 0.3), (15.0, 0.9)]);
        assert!(is_well_formed_xml(&svg));
        assert!(svg.contains("polyline"));
        assert!(is_well_formed_xml(&svg_scalar_chart("empty", &[])));
    }

    #[test]
    fn xml_check_rejects_malformed_documents() {
        assert!(is_well_formed_xml("<svg/>\n"));
        assert!(is_well_formed_xml("<!-- note --><svg><g><line/></g></svg>"));
        assert!(!is_well_formed_xml("<svg><line></svg>"));
        assert!(!is_well_formed_xml("<svg></svg><svg></svg>"));
        assert!(!is_well_formed_xml("stray<svg/>"));
        assert!(!is_well_formed_xml("<svg a=\"1></svg>"));
        assert!(!is_well_formed_xml("<svg>"));
        assert!(!is_well_formed_xml(""));
    }

    #[test]
    fn emit_report_writes_each_format_and_rejects_unknown() {
        let dir = tempfile::tempdir().unwrap();
        let records = [ok_record("ewc", 1)];
        for format in ["csv", "json", "svg"] {
            let path = emit_report(&records, dir.path(), format).unwrap();
            assert!(path.exists());
            assert_eq!(path.file_name().unwrap().to_str().unwrap(), format!("report.{}", format));
        }
        let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        assert_eq!(parse_record(&serde_json::to_string(&records[0]).unwrap()).unwrap().method, "ewc");
        assert!(json.starts_with('['));
        assert!(emit_report(&records, dir.path(), "pdf").is_err());
    }
}
