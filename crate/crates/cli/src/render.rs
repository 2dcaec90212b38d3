//! Molecule depictions with per-atom saliency drawn as blue disks.

use std::fmt::Write;

use gcnx_core::graph::ElementLabel;
use gcnx_core::smiles::{BondOrder, Molecule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PANEL: f64 = 320.0;
const MARGIN: f64 = 36.0;
const HEADER: f64 = 28.0;
const DISK_RADIUS: f64 = 15.0;

/// Fruchterman–Reingold embedding from a seeded random start. Deterministic
/// for a given molecule and seed.
pub fn layout(m: &Molecule, seed: u64) -> Vec<(f64, f64)> {
    let n = m.n_atoms();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.gen_range(-1.0..1.0) * (n as f64).sqrt(), rng.gen_range(-1.0..1.0) * (n as f64).sqrt()))
        .collect();
    if n < 2 {
        return vec![(0.0, 0.0); n];
    }
    let k = 1.0;
    let iterations = 400;
    for it in 0..iterations {
        let temperature = 0.6 * (1.0 - it as f64 / iterations as f64) + 0.01;
        let mut shift = vec![(0.0, 0.0); n];
        for i in 0..n {
            for j in i + 1..n {
                let (dx, dy) = (pos[i].0 - pos[j].0, pos[i].1 - pos[j].1);
                let d = (dx * dx + dy * dy).sqrt().max(1e-3);
                let f = k * k / d;
                shift[i].0 += dx / d * f;
                shift[i].1 += dy / d * f;
                shift[j].0 -= dx / d * f;
                shift[j].1 -= dy / d * f;
            }
        }
        for b in &m.bonds {
            let (dx, dy) = (pos[b.i].0 - pos[b.j].0, pos[b.i].1 - pos[b.j].1);
            let d = (dx * dx + dy * dy).sqrt().max(1e-3);
            let f = d * d / k;
            shift[b.i].0 -= dx / d * f;
            shift[b.i].1 -= dy / d * f;
            shift[b.j].0 += dx / d * f;
            shift[b.j].1 += dy / d * f;
        }
        for (p, s) in pos.iter_mut().zip(&shift) {
            let len = (s.0 * s.0 + s.1 * s.1).sqrt();
            if len > 0.0 {
                let step = len.min(temperature);
                p.0 += s.0 / len * step;
                p.1 += s.1 / len * step;
            }
        }
    }
    pos
}

fn fit(pos: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let (min_x, max_x) = pos.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.0), hi.max(p.0)));
    let (min_y, max_y) = pos.iter().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
    let span = (max_x - min_x).max(max_y - min_y).max(1e-9);
    let usable = PANEL - 2.0 * MARGIN;
    let scale = (usable / span).min(60.0);
    let (cx, cy) = ((min_x + max_x) / 2.0, (min_y + max_y) / 2.0);
    pos.iter()
        .map(|p| (PANEL / 2.0 + (p.0 - cx) * scale, HEADER + PANEL / 2.0 + (p.1 - cy) * scale))
        .collect()
}

fn atom_text(label: &ElementLabel) -> String {
    let mut s = label.symbol.symbol().to_string();
    if label.aromatic {
        s = s.to_ascii_lowercase();
    }
    match label.formal_charge {
        0 => {}
        1 => s.push('+'),
        -1 => s.push('-'),
        c if c > 0 => write!(s, "{c}+").unwrap(),
        c => write!(s, "{}-", -c).unwrap(),
    }
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Two side-by-side panels (class 0, class 1). Disk opacity is the saliency
/// divided by the largest value across both panels.
pub fn svg(m: &Molecule, title: &str, maps: [&[f64]; 2], seed: u64) -> String {
    let coords = fit(&layout(m, seed));
    let peak = maps.iter().flat_map(|v| v.iter()).fold(0.0f64, |a, &b| a.max(b));
    let mut out = String::new();
    let width = 2.0 * PANEL;
    let height = PANEL + HEADER;
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="{width}" height="{height}" fill="white"/>"#).unwrap();
    for (class, values) in maps.iter().enumerate() {
        let dx = class as f64 * PANEL;
        writeln!(out, r#"<g transform="translate({dx},0)">"#).unwrap();
        writeln!(
            out,
            r#"<text x="8" y="18" font-size="13">{} | class {class}</text>"#,
            escape(title)
        )
        .unwrap();
        for (i, &(x, y)) in coords.iter().enumerate() {
            let opacity = if peak > 0.0 { values[i] / peak } else { 0.0 };
            if opacity > 0.0 {
                writeln!(
                    out,
                    r#"<circle cx="{x:.2}" cy="{y:.2}" r="{DISK_RADIUS}" fill="rgb(0,0,255)" fill-opacity="{opacity:.4}"/>"#
                )
                .unwrap();
            }
        }
        for b in &m.bonds {
            let ((x1, y1), (x2, y2)) = (coords[b.i], coords[b.j]);
            let len = ((x2 - x1).powi(2) + (y2 - y1).powi(2)).sqrt().max(1e-9);
            let (nx, ny) = (-(y2 - y1) / len * 3.0, (x2 - x1) / len * 3.0);
            let offsets: &[f64] = match b.order {
                BondOrder::Single | BondOrder::Aromatic => &[0.0],
                BondOrder::Double => &[-1.0, 1.0],
                BondOrder::Triple => &[-1.5, 0.0, 1.5],
            };
            for &o in offsets {
                writeln!(
                    out,
                    r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="1.5"/>"#,
                    x1 + nx * o,
                    y1 + ny * o,
                    x2 + nx * o,
                    y2 + ny * o
                )
                .unwrap();
            }
            if b.order == BondOrder::Aromatic {
                writeln!(
                    out,
                    r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="1" stroke-dasharray="3,3"/>"#,
                    x1 + nx * 1.5,
                    y1 + ny * 1.5,
                    x2 + nx * 1.5,
                    y2 + ny * 1.5
                )
                .unwrap();
            }
        }
        for (i, &(x, y)) in coords.iter().enumerate() {
            writeln!(
                out,
                r#"<text x="{x:.2}" y="{:.2}" font-size="12" text-anchor="middle" stroke="white" stroke-width="3" paint-order="stroke">{}</text>"#,
                y + 4.0,
                escape(&atom_text(&m.atoms()[i]))
            )
            .unwrap();
        }
        writeln!(out, "</g>").unwrap();
    }
    out.push_str("</svg>\n");
    out
}

/// Graphviz fallback: one cluster per class, fill alpha from saliency.
pub fn dot(m: &Molecule, title: &str, maps: [&[f64]; 2]) -> String {
    let peak = maps.iter().flat_map(|v| v.iter()).fold(0.0f64, |a, &b| a.max(b));
    let mut out = String::new();
    writeln!(out, "graph \"{}\" {{", title.replace('"', "'")).unwrap();
    writeln!(out, "  node [shape=circle, style=filled, fontname=\"sans-serif\"];").unwrap();
    for (class, values) in maps.iter().enumerate() {
        writeln!(out, "  subgraph cluster_{class} {{\n    label=\"class {class}\";").unwrap();
        for (i, label) in m.atoms().iter().enumerate() {
            let alpha = if peak > 0.0 { (values[i] / peak * 255.0).round() as u8 } else { 0 };
            writeln!(
                out,
                "    c{class}_{i} [label=\"{}\", fillcolor=\"#0000ff{alpha:02x}\"];",
                atom_text(label)
            )
            .unwrap();
        }
        for b in &m.bonds {
            let style = match b.order {
                BondOrder::Single => "",
                BondOrder::Double => " [penwidth=2.5]",
                BondOrder::Triple => " [penwidth=4]",
                BondOrder::Aromatic => " [style=dashed]",
            };
            writeln!(out, "    c{class}_{} -- c{class}_{}{style};", b.i, b.j).unwrap();
        }
        writeln!(out, "  }}").unwrap();
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use gcnx_core::smiles::parse_smiles;

    #[test]
    fn layout_is_seeded() {
        let m = parse_smiles("c1ccccc1CCO").unwrap();
        assert_eq!(layout(&m, 3), layout(&m, 3));
        assert_ne!(layout(&m, 3), layout(&m, 4));
        let bonded = layout(&m, 3);
        for b in &m.bonds {
            let d = ((bonded[b.i].0 - bonded[b.j].0).powi(2) + (bonded[b.i].1 - bonded[b.j].1).powi(2)).sqrt();
            assert!(d > 0.3 && d < 3.0, "bond length {d}");
        }
    }

    #[test]
    fn svg_has_disks_only_where_salient() {
        let m = parse_smiles("CCO").unwrap();
        let s = svg(&m, "x", [&[0.0, 0.0, 0.0], &[0.0, 0.5, 1.0]], 0);
        assert_eq!(s.matches("<circle").count(), 2);
        assert!(s.contains(r#"fill-opacity="1.0000""#));
        let d = dot(&m, "x", [&[0.0; 3], &[0.0, 0.5, 1.0]]);
        assert!(d.contains("#0000ffff"));
        assert_eq!(d.matches(" -- ").count(), 4);
    }
}
