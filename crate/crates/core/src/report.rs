//! Human-readable tables, CSV exports and SVG charts of evaluation reports.

use std::fmt::Write as _;

use serde::Serialize;

use crate::eval::{ClassificationReport, HeightEvaluation, MotionEvaluation, RegressionReport};

/// Pretty JSON with a trailing newline. Field order follows the struct
/// definitions and maps are ordered, so equal reports give equal bytes.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

pub fn classification_table(r: &ClassificationReport) -> String {
    let width = r.classes.iter().map(|c| c.len()).max().unwrap_or(5).max(5);
    let mut s = String::new();
    let _ = writeln!(s, "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}", "class", "precision", "recall", "f1", "support");
    for (i, c) in r.classes.iter().enumerate() {
        let _ = writeln!(
            s,
            "{:<width$}  {:>9.3}  {:>9.3}  {:>9.3}  {:>7}",
            c, r.per_class_precision[i], r.per_class_recall[i], r.per_class_f1[i], r.support[i]
        );
    }
    let _ = writeln!(
        s,
        "{:<width$}  {:>9.3}  {:>9.3}  {:>9.3}  {:>7}",
        "macro",
        r.macro_precision,
        r.macro_recall,
        r.macro_f1,
        r.total()
    );
    let _ = writeln!(s, "accuracy {:.3}", r.accuracy);
    let _ = writeln!(s);
    let _ = writeln!(s, "confusion (rows true, columns predicted)");
    let cell = r.confusion.iter().flatten().map(|n| n.to_string().len()).max().unwrap_or(1).max(4);
    let _ = write!(s, "{:<width$}", "");
    for c in &r.classes {
        let _ = write!(s, "  {:>cell$}", &c[..c.len().min(cell)]);
    }
    let _ = writeln!(s);
    for (i, row) in r.confusion.iter().enumerate() {
        let _ = write!(s, "{:<width$}", r.classes[i]);
        for n in row {
            let _ = write!(s, "  {n:>cell$}");
        }
        let _ = writeln!(s);
    }
    s
}

pub fn regression_table(name: &str, r: &RegressionReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{name}: mae {:.4} m, std {:.4} m, bias {:+.4} m over {} windows",
        r.mae, r.std_abs_err, r.bias, r.count
    );
    let _ = writeln!(s, "{:>8}  {:>8}  {:>8}  {:>6}", "height", "mae", "std", "count");
    for b in &r.binned {
        let _ = writeln!(s, "{:>8.3}  {:>8.4}  {:>8.4}  {:>6}", b.center, b.mae, b.std, b.count);
    }
    s
}

pub fn height_summary(e: &HeightEvaluation) -> String {
    let mut s = regression_table("forest", &e.forest);
    s.push('\n');
    s.push_str(&regression_table("model inversion", &e.baseline));
    s.push_str("\nfeature importances\n");
    for v in &e.importances {
        let _ = writeln!(s, "{:>8}  {:.4}", v.name, v.value);
    }
    if !e.skipped.is_empty() {
        let _ = writeln!(s, "\n{} windows skipped", e.skipped.len());
    }
    s
}

pub fn motion_summary(e: &MotionEvaluation) -> String {
    let mut s = classification_table(&e.report);
    for f in e.folds.iter().filter(|f| !f.missing_classes.is_empty()) {
        let missing: Vec<String> = f.missing_classes.iter().map(|c| c.to_string()).collect();
        let _ = writeln!(s, "fold {}: no training data for {}", f.fold, missing.join(", "));
    }
    if !e.skipped.is_empty() {
        let _ = writeln!(s, "{} windows skipped", e.skipped.len());
    }
    s
}

/// Counts by default, row-normalized rates with `normalized`.
pub fn confusion_csv(r: &ClassificationReport, normalized: bool) -> String {
    let mut s = String::from("true\\predicted");
    for c in &r.classes {
        let _ = write!(s, ",{c}");
    }
    s.push('\n');
    for (i, c) in r.classes.iter().enumerate() {
        s.push_str(c);
        for j in 0..r.classes.len() {
            if normalized {
                let _ = write!(s, ",{}", r.row_normalized[i][j]);
            } else {
                let _ = write!(s, ",{}", r.confusion[i][j]);
            }
        }
        s.push('\n');
    }
    s
}

pub fn binned_csv(r: &RegressionReport) -> String {
    let mut s = String::from("bin_center,mae,std,count\n");
    for b in &r.binned {
        let _ = writeln!(s, "{},{},{},{}", b.center, b.mae, b.std, b.count);
    }
    s
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// White-to-blue heatmap of the row-normalized confusion matrix with the
/// rate printed in every cell, so the diagonal reads as per-class recall.
pub fn confusion_svg(r: &ClassificationReport) -> String {
    const CELL: f64 = 64.0;
    const LEFT: f64 = 110.0;
    const TOP: f64 = 40.0;
    let n = r.classes.len() as f64;
    let width = LEFT + n * CELL + 20.0;
    let height = TOP + n * CELL + 90.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">macro F1 {:.3}</text>"#,
        LEFT + n * CELL / 2.0,
        r.macro_f1
    );
    for (i, row) in r.row_normalized.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            let x = LEFT + j as f64 * CELL;
            let y = TOP + i as f64 * CELL;
            let shade = |full: f64| (255.0 - p.clamp(0.0, 1.0) * (255.0 - full)).round() as u8;
            let (cr, cg, cb) = (shade(8.0), shade(48.0), shade(107.0));
            let ink = if p > 0.5 { "white" } else { "black" };
            let _ = writeln!(
                s,
                r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#{cr:02x}{cg:02x}{cb:02x}" stroke="#cccccc"/>"##
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{ink}">{p:.2}</text>"#,
                x + CELL / 2.0,
                y + CELL / 2.0 + 4.0
            );
        }
    }
    for (i, c) in r.classes.iter().enumerate() {
        let c = escape(c);
        let y = TOP + i as f64 * CELL + CELL / 2.0 + 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end">{c}</text>"#, LEFT - 8.0);
        let x = LEFT + i as f64 * CELL + CELL / 2.0;
        let yb = TOP + n * CELL + 12.0;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{yb}" text-anchor="end" transform="rotate(-45 {x} {yb})">{c}</text>"#
        );
    }
    let _ = writeln!(s, r#"<text x="12" y="{}" transform="rotate(-90 12 {0})" text-anchor="middle">true</text>"#, TOP + n * CELL / 2.0);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">predicted</text>"#,
        LEFT + n * CELL / 2.0,
        height - 8.0
    );
    s.push_str("</svg>\n");
    s
}

/// Bar chart of MAE per height bin with ±std whiskers and bin counts.
pub fn binned_svg(r: &RegressionReport) -> String {
    const BAR: f64 = 36.0;
    const LEFT: f64 = 60.0;
    const TOP: f64 = 30.0;
    const PLOT: f64 = 240.0;
    let n = r.binned.len().max(1) as f64;
    let width = LEFT + n * BAR + 20.0;
    let height = TOP + PLOT + 60.0;
    let top_value = r.binned.iter().map(|b| b.mae + b.std).fold(0.0, f64::max);
    let y_max = if top_value > 0.0 { (top_value * 100.0).ceil() / 100.0 } else { 0.01 };
    let y = |v: f64| TOP + PLOT * (1.0 - v / y_max);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">MAE {:.3} m over {} windows</text>"#,
        LEFT + n * BAR / 2.0,
        r.mae,
        r.count
    );
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let yy = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{yy}" x2="{}" y2="{yy}" stroke="#e0e0e0"/>"##,
            LEFT + n * BAR
        );
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{:.0}</text>"#, LEFT - 6.0, yy + 4.0, v * 100.0);
    }
    for (i, b) in r.binned.iter().enumerate() {
        let x = LEFT + i as f64 * BAR;
        let mid = x + BAR / 2.0;
        let _ = writeln!(
            s,
            r##"<rect x="{}" y="{}" width="{}" height="{}" fill="#4a7ab5"/>"##,
            x + 4.0,
            y(b.mae),
            BAR - 8.0,
            PLOT * b.mae / y_max
        );
        let _ = writeln!(
            s,
            r#"<line x1="{mid}" y1="{}" x2="{mid}" y2="{}" stroke="black"/>"#,
            y(b.mae + b.std),
            y((b.mae - b.std).max(0.0))
        );
        let _ = writeln!(
            s,
            r##"<text x="{mid}" y="{}" text-anchor="middle" fill="#555555">{}</text>"##,
            y(b.mae + b.std) - 4.0,
            b.count
        );
        let yb = TOP + PLOT + 14.0;
        let _ = writeln!(s, r#"<text x="{mid}" y="{yb}" text-anchor="middle">{:.2}</text>"#, b.center);
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">body height (m)</text>"#,
        LEFT + n * BAR / 2.0,
        TOP + PLOT + 40.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" transform="rotate(-90 14 {0})" text-anchor="middle">MAE (cm)</text>"#,
        TOP + PLOT / 2.0
    );
    s.push_str("</svg>\n");
    s
}
