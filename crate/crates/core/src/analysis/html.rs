//! Self-contained static HTML report: per-example soft-label bars with KL
//! scores, PCA scatters, and variance/disagreement scatters, all inline
//! (no external assets).

use std::collections::BTreeMap;
use std::fmt::Write;

use crate::analysis::delta::DistributionDelta;
use crate::analysis::pca::PCAProjection;
use crate::analysis::softlabel::{KlAggregate, SoftLabelRecord};
use crate::schema::LabelSchema;

/// Fixed label-to-color palette, cycled for wide schemas.
const PALETTE: [&str; 12] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948",
    "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac", "#2f4b7c", "#a05195",
];

const ORIGINAL_COLOR: &str = "#f28e2b";
const IMPUTED_COLOR: &str = "#4e79a7";

pub struct ReportInputs<'a> {
    pub title: &'a str,
    pub records: &'a [SoftLabelRecord],
    pub aggregates: &'a BTreeMap<String, KlAggregate>,
    pub deltas: &'a BTreeMap<String, DistributionDelta>,
    pub pca: &'a BTreeMap<String, PCAProjection>,
    pub schema: &'a LabelSchema,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn label_color(class_idx: usize) -> &'static str {
    PALETTE[class_idx % PALETTE.len()]
}

fn label_title(schema: &LabelSchema, class_idx: usize) -> String {
    let value = schema.label_at(class_idx);
    match &schema.label_names {
        Some(names) => format!("{} ({})", value, escape(&names[class_idx])),
        None => value.to_string(),
    }
}

fn write_bar(out: &mut String, source: &str, probs: &[f64], schema: &LabelSchema) {
    let _ = write!(out, "<div class=\"row\"><span class=\"src\">{}</span>", escape(source));
    out.push_str("<div class=\"bar\">");
    for (class_idx, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let _ = write!(
            out,
            "<span class=\"seg\" title=\"{}\" style=\"background:{};width:{:.6}%\"></span>",
            label_title(schema, class_idx),
            label_color(class_idx),
            p * 100.0
        );
    }
    out.push_str("</div><span class=\"props\">");
    let mut first = true;
    for (class_idx, &p) in probs.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        if !first {
            out.push_str(" &middot; ");
        }
        first = false;
        let _ = write!(
            out,
            "{}: {:.1}%",
            label_title(schema, class_idx),
            p * 100.0
        );
    }
    out.push_str("</span></div>\n");
}

fn scatter_svg(title: &str, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    let (width, height, margin) = (340.0, 260.0, 30.0);
    let all: Vec<(f64, f64)> = series.iter().flat_map(|(_, pts)| pts.iter().copied()).collect();
    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg viewBox=\"0 0 {width} {height}\" width=\"{width}\" height=\"{height}\" role=\"img\">"
    );
    let _ = write!(
        svg,
        "<rect x=\"0.5\" y=\"0.5\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#ccc\"/>",
        width - 1.0,
        height - 1.0
    );
    let _ = write!(
        svg,
        "<text x=\"{}\" y=\"18\" text-anchor=\"middle\" font-size=\"12\">{}</text>",
        width / 2.0,
        escape(title)
    );
    if !all.is_empty() {
        let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &all {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        let x_span = if (x1 - x0).abs() < 1e-12 { 1.0 } else { x1 - x0 };
        let y_span = if (y1 - y0).abs() < 1e-12 { 1.0 } else { y1 - y0 };
        for (color, points) in series {
            for &(x, y) in points {
                let px = margin + (x - x0) / x_span * (width - 2.0 * margin);
                let py = height - margin - (y - y0) / y_span * (height - 2.0 * margin);
                let _ = write!(
                    svg,
                    "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"2.4\" fill=\"{color}\" fill-opacity=\"0.55\"/>"
                );
            }
        }
    }
    svg.push_str("</svg>");
    svg
}

/// Renders the whole analysis report as one self-contained HTML document.
pub fn render_report_html(inputs: &ReportInputs) -> String {
    let mut out = String::new();
    out.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    let _ = write!(out, "<title>{}</title>\n", escape(inputs.title));
    out.push_str(
        "<style>\n\
         body{font-family:system-ui,sans-serif;margin:2rem;max-width:70rem}\n\
         .bar{display:inline-flex;width:24rem;height:1.2rem;border:1px solid #999;vertical-align:middle}\n\
         .seg{display:inline-block;height:100%}\n\
         .src{display:inline-block;width:7rem;font-size:0.85rem}\n\
         .props{margin-left:0.6rem;font-size:0.8rem;color:#333}\n\
         .kl{font-size:0.85rem;margin:0.2rem 0 1rem 7rem}\n\
         .example{margin-bottom:1.4rem}\n\
         table{border-collapse:collapse;margin:1rem 0}\n\
         td,th{border:1px solid #bbb;padding:0.25rem 0.6rem;font-size:0.85rem}\n\
         .figs{display:flex;flex-wrap:wrap;gap:1rem}\n\
         </style>\n</head>\n<body>\n",
    );
    let _ = write!(out, "<h1>{}</h1>\n", escape(inputs.title));

    // Legend
    out.push_str("<h2>Label colors</h2>\n<p>");
    for class_idx in 0..inputs.schema.n_labels() {
        let _ = write!(
            out,
            "<span class=\"seg\" style=\"background:{};width:0.9rem;height:0.9rem;display:inline-block\"></span> {} &nbsp; ",
            label_color(class_idx),
            label_title(inputs.schema, class_idx)
        );
    }
    out.push_str("</p>\n");

    // Aggregate KL table
    if !inputs.aggregates.is_empty() {
        out.push_str("<h2>KL divergence from the original soft labels</h2>\n<table>\n<tr><th>Method</th><th>Mean</th><th>Std</th></tr>\n");
        let best = inputs
            .aggregates
            .iter()
            .min_by(|(_, a), (_, b)| a.mean.partial_cmp(&b.mean).unwrap())
            .map(|(name, _)| name.clone());
        for (name, agg) in inputs.aggregates {
            let cell = if Some(name) == best.as_ref() {
                format!("<strong>{:.3}</strong>", agg.mean)
            } else {
                format!("{:.3}", agg.mean)
            };
            let _ = write!(
                out,
                "<tr><td>{}</td><td>{}</td><td>{:.4}</td></tr>\n",
                escape(name),
                cell,
                agg.std
            );
        }
        out.push_str("</table>\n");
    }

    // Distribution deltas
    if !inputs.deltas.is_empty() {
        out.push_str("<h2>Change after imputation</h2>\n<table>\n<tr><th>Method</th><th>Avg variance change</th><th>Avg disagreement change</th></tr>\n");
        for (name, delta) in inputs.deltas {
            let _ = write!(
                out,
                "<tr><td>{}</td><td>{:.4}</td><td>{:.4}</td></tr>\n",
                escape(name),
                delta.avg_variance_change,
                delta.avg_disagreement_change
            );
        }
        out.push_str("</table>\n<div class=\"figs\">\n");
        for (name, delta) in inputs.deltas {
            let before: Vec<(f64, f64)> = delta
                .per_item
                .iter()
                .map(|d| (d.disagreement_before, d.variance_before))
                .collect();
            let after: Vec<(f64, f64)> = delta
                .per_item
                .iter()
                .map(|d| (d.disagreement_after, d.variance_after))
                .collect();
            out.push_str(&scatter_svg(
                &format!("variance vs disagreement: {name} (orange original, blue imputed)"),
                &[(ORIGINAL_COLOR, before), (IMPUTED_COLOR, after)],
            ));
            out.push('\n');
        }
        out.push_str("</div>\n");
    }

    // PCA scatters
    if !inputs.pca.is_empty() {
        out.push_str("<h2>PCA projections</h2>\n<div class=\"figs\">\n");
        for (name, projection) in inputs.pca {
            let points: Vec<(f64, f64)> = projection
                .coordinates
                .iter()
                .map(|&[x, y]| (x, y))
                .collect();
            out.push_str(&scatter_svg(
                &format!("PCA: {name}"),
                &[(IMPUTED_COLOR, points)],
            ));
            out.push('\n');
        }
        out.push_str("</div>\n");
    }

    // Per-example soft label bars
    out.push_str("<h2>Soft labels per example</h2>\n");
    if inputs.records.is_empty() {
        out.push_str("<p>No examples to display.</p>\n");
    }
    for record in inputs.records {
        let _ = write!(out, "<div class=\"example\"><h3>Example {}</h3>\n", record.item);
        write_bar(&mut out, "original", record.original.probs(), inputs.schema);
        for (method, soft) in &record.imputed_by_method {
            write_bar(&mut out, method, soft.probs(), inputs.schema);
        }
        out.push_str("<div class=\"kl\">KL: ");
        let mut first = true;
        for (method, &kl) in &record.kl_by_method {
            if !first {
                out.push_str(" &middot; ");
            }
            first = false;
            if *method == record.best_method {
                let _ = write!(out, "<strong>{} {:.3}</strong>", escape(method), kl);
            } else {
                let _ = write!(out, "{} {:.3}", escape(method), kl);
            }
        }
        out.push_str("</div></div>\n");
    }

    out.push_str("</body>\n</html>\n");
    out
}
