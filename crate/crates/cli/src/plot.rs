//! Grouped bar chart of response probabilities as a standalone SVG.
//! One bar per item and class: the probability of the item's last
//! category (the "yes" answer for binary items).

use std::fmt::Write;

use crate::document::FitDocument;
use crate::error::{CliError, Result};

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 640.0;
const PALETTE: [&str; 8] = ["#0072B2", "#E69F00", "#009E73", "#CC79A7", "#56B4E9", "#D55E00", "#F0E442", "#000000"];

pub struct PlotOptions {
    pub horiz: bool,
    pub clab: Option<Vec<String>>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn render_svg(doc: &FitDocument, opts: &PlotOptions) -> Result<String> {
    let t_count = doc.n_low();
    let labels: Vec<String> = match &opts.clab {
        Some(l) if l.len() != t_count => {
            return Err(CliError::Usage(format!(
                "--clab has {} labels but the model has {t_count} classes",
                l.len()
            )))
        }
        Some(l) => l.clone(),
        None => (1..=t_count).map(|t| format!("C{t}")).collect(),
    };
    let h_count = doc.items.len();

    let (left, right, top) = (70.0, 30.0, 60.0);
    let bottom = if opts.horiz { 70.0 } else { 150.0 };
    let plot_w = WIDTH - left - right;
    let plot_h = HEIGHT - top - bottom;
    let slot = plot_w / h_count.max(1) as f64;
    let bar_w = slot * 0.8 / t_count as f64;
    let y_of = |p: f64| top + plot_h * (1.0 - p);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="30" text-anchor="middle" font-size="16">Response probabilities by class</text>"#,
        WIDTH / 2.0
    );

    // axis and grid
    let _ = writeln!(s, r##"<g class="axis" stroke="#444" stroke-width="1">"##);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{}"/>"#, top + plot_h);
    let _ = writeln!(s, r#"<line x1="{left}" y1="{}" x2="{}" y2="{}"/>"#, top + plot_h, left + plot_w, top + plot_h);
    let _ = writeln!(s, "</g>");
    for k in 0..=5 {
        let p = k as f64 / 5.0;
        let y = y_of(p);
        let _ = writeln!(
            s,
            r##"<line x1="{left}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{p:.1}</text>"##,
            left + plot_w,
            left - 6.0,
            y + 4.0
        );
    }

    let _ = writeln!(s, r#"<g class="bars">"#);
    for (h, probs) in doc.response_probabilities.iter().enumerate() {
        let last = probs.cols - 1;
        let x0 = left + h as f64 * slot + slot * 0.1;
        for t in 0..t_count {
            let p = probs[(t, last)];
            let x = x0 + t as f64 * bar_w;
            let y = y_of(p);
            let _ = writeln!(
                s,
                r#"<rect class="bar" x="{x:.2}" y="{y:.2}" width="{bar_w:.2}" height="{:.2}" fill="{}"><title>{} {}: {p:.4}</title></rect>"#,
                top + plot_h - y,
                PALETTE[t % PALETTE.len()],
                escape(&doc.items[h].name),
                escape(&labels[t])
            );
        }
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g class="items">"#);
    for (h, item) in doc.items.iter().enumerate() {
        let x = left + (h as f64 + 0.5) * slot;
        let y = top + plot_h + 18.0;
        if opts.horiz {
            let _ = writeln!(s, r#"<text x="{x:.2}" y="{y:.2}" text-anchor="middle">{}</text>"#, escape(&item.name));
        } else {
            let _ = writeln!(
                s,
                r#"<text x="{x:.2}" y="{y:.2}" text-anchor="end" transform="rotate(-90 {x:.2} {y:.2})">{}</text>"#,
                escape(&item.name)
            );
        }
    }
    let _ = writeln!(s, "</g>");

    let _ = writeln!(s, r#"<g class="legend">"#);
    for (t, label) in labels.iter().enumerate() {
        let x = left + 10.0 + t as f64 * 130.0;
        let y = HEIGHT - 22.0;
        let _ = writeln!(
            s,
            r#"<rect x="{x:.2}" y="{:.2}" width="14" height="14" fill="{}"/><text x="{:.2}" y="{y:.2}">{}</text>"#,
            y - 11.0,
            PALETTE[t % PALETTE.len()],
            x + 20.0,
            escape(label)
        );
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    Ok(s)
}
