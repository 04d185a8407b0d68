//! Standalone SVG charts: loss curves from a training history and grouped
//! bar charts from an ablation study.

use std::fmt::Write as _;

use amn_core::study::StudyRecord;
use amn_core::train::EpochRecord;

const W: f64 = 720.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 70.0;
const COLORS: [&str; 3] = ["#1f77b4", "#ff7f0e", "#2ca02c"];

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Round tick step covering `span` in about five ticks.
fn nice_step(span: f64) -> f64 {
    if !(span > 0.0) || !span.is_finite() {
        return 1.0;
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    let f = if r <= 1.0 {
        1.0
    } else if r <= 2.0 {
        2.0
    } else if r <= 5.0 {
        5.0
    } else {
        10.0
    };
    f * mag
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        let span = if self.x1 > self.x0 {
            self.x1 - self.x0
        } else {
            1.0
        };
        LEFT + (x - self.x0) / span * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        let span = if self.y1 > self.y0 {
            self.y1 - self.y0
        } else {
            1.0
        };
        H - BOTTOM - (y - self.y0) / span * (H - TOP - BOTTOM)
    }
}

fn header(s: &mut String, title: &str) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(title)
    );
}

fn y_axis(s: &mut String, f: &Frame, label: &str) {
    let step = nice_step(f.y1 - f.y0);
    let mut v = (f.y0 / step).ceil() * step;
    while v <= f.y1 + step * 1e-9 {
        let y = f.py(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
            W - RIGHT,
            LEFT - 6.0,
            y + 4.0,
            fmt_tick(v, step)
        );
        v += step;
    }
    let _ = writeln!(
        s,
        r#"<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{}" stroke="black"/><line x1="{LEFT}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
        H - BOTTOM,
        H - BOTTOM,
        W - RIGHT,
        H - BOTTOM
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(16 {}) rotate(-90)" text-anchor="middle">{}</text>"#,
        (TOP + H - BOTTOM) / 2.0,
        escape(label)
    );
}

fn fmt_tick(v: f64, step: f64) -> String {
    let decimals = (-step.log10().floor()).max(0.0) as usize;
    format!("{v:.decimals$}")
}

fn legend(s: &mut String, names: &[&str]) {
    for (i, name) in names.iter().enumerate() {
        let x = LEFT + 10.0 + 120.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{x}" y="{}" width="12" height="12" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            H - 22.0,
            COLORS[i % COLORS.len()],
            x + 16.0,
            H - 12.0,
            escape(name)
        );
    }
}

/// Train and validation loss against epoch.
pub fn history_svg(history: &[EpochRecord], title: &str) -> String {
    let finite = |v: f64| v.is_finite();
    let ys: Vec<f64> = history
        .iter()
        .flat_map(|r| [r.train_loss, r.val_loss])
        .filter(|&v| finite(v))
        .collect();
    let (lo, hi) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let (lo, hi) = if lo.is_finite() {
        (lo.min(0.0), hi.max(lo + 1e-9))
    } else {
        (0.0, 1.0)
    };
    let n = history.len();
    let f = Frame {
        x0: history.first().map_or(1.0, |r| r.epoch as f64),
        x1: history.last().map_or(1.0, |r| r.epoch as f64),
        y0: lo,
        y1: hi,
    };
    let mut s = String::new();
    header(&mut s, title);
    y_axis(&mut s, &f, "loss");
    let xstep = nice_step((f.x1 - f.x0).max(1.0)).max(1.0);
    let mut e = (f.x0 / xstep).ceil() * xstep;
    while e <= f.x1 {
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            f.px(e),
            H - BOTTOM + 16.0,
            e as usize
        );
        e += xstep;
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">epoch</text>"#,
        W / 2.0,
        H - BOTTOM + 34.0
    );
    for (i, pick) in [|r: &EpochRecord| r.train_loss, |r: &EpochRecord| r.val_loss]
        .iter()
        .enumerate()
    {
        let pts: Vec<String> = history
            .iter()
            .filter(|r| finite(pick(r)))
            .map(|r| format!("{:.2},{:.2}", f.px(r.epoch as f64), f.py(pick(r))))
            .collect();
        if pts.len() > 1 {
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{}" stroke-width="2" points="{}"/>"#,
                COLORS[i],
                pts.join(" ")
            );
        }
        if n <= 60 {
            for p in &pts {
                let (x, y) = p.split_once(',').expect("formatted above");
                let _ = writeln!(
                    s,
                    r#"<circle cx="{x}" cy="{y}" r="2.5" fill="{}"/>"#,
                    COLORS[i]
                );
            }
        }
    }
    legend(&mut s, &["train loss", "val loss"]);
    s.push_str("</svg>\n");
    s
}

/// Macro F1 per study row, one bar per scoring family, with 95% interval
/// whiskers where an interval exists.
pub fn study_svg(records: &[StudyRecord], title: &str) -> String {
    let f = Frame {
        x0: 0.0,
        x1: records.len().max(1) as f64,
        y0: 0.0,
        y1: 1.0,
    };
    let mut s = String::new();
    header(&mut s, title);
    y_axis(&mut s, &f, "macro F1");
    let slot = (W - LEFT - RIGHT) / records.len().max(1) as f64;
    let bar = slot * 0.8 / 3.0;
    for (i, r) in records.iter().enumerate() {
        let x0 = LEFT + slot * i as f64 + slot * 0.1;
        let values = [
            (r.tagging_f1, r.tagging_ci95),
            (r.segment_f1, r.segment_ci95),
            (r.event_f1, r.event_ci95),
        ];
        for (j, (m, ci)) in values.iter().enumerate() {
            if !m.is_finite() {
                continue;
            }
            let x = x0 + bar * j as f64;
            let top = f.py(m.clamp(0.0, 1.0));
            let _ = writeln!(
                s,
                r#"<rect x="{x:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{}"><title>{} {}: {m:.4}</title></rect>"#,
                bar * 0.95,
                (H - BOTTOM - top).max(0.0),
                COLORS[j],
                escape(&r.row),
                ["tagging", "segment", "event"][j]
            );
            if ci.is_finite() && *ci > 0.0 {
                let cx = x + bar * 0.475;
                let (lo, hi) = (
                    f.py((m - ci).clamp(0.0, 1.0)),
                    f.py((m + ci).clamp(0.0, 1.0)),
                );
                let _ = writeln!(
                    s,
                    r#"<line x1="{cx:.2}" y1="{lo:.2}" x2="{cx:.2}" y2="{hi:.2}" stroke="black"/>"#
                );
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{}</text>"#,
            x0 + slot * 0.4,
            H - BOTTOM + 16.0,
            escape(&r.row)
        );
    }
    legend(&mut s, &["tagging", "segment", "event"]);
    s.push_str("</svg>\n");
    s
}
