//! Exact measure of a union of equal discs clipped to a rectangle (or of
//! equal intervals clipped to an interval).
//!
//! In two dimensions the area comes from Green's theorem: the boundary of
//! the clipped union is a chain of circular arcs and rectangle edge pieces,
//! and each piece contributes `½ ∮ (x dy − y dx)` in closed form.

use std::f64::consts::TAU;

use crate::pattern::{distance, Domain, Point};

pub fn disc_union_measure(dom: &Domain, centres: &[Point], radius: f64) -> f64 {
    if centres.is_empty() || radius <= 0.0 {
        return 0.0;
    }
    if dom.dim() == 1 {
        interval_union_length(dom, centres, radius)
    } else {
        disc_union_area(dom, centres, radius)
    }
}

fn interval_union_length(dom: &Domain, centres: &[Point], radius: f64) -> f64 {
    let (a, b) = (dom.lower()[0], dom.upper()[0]);
    let mut spans: Vec<(f64, f64)> = centres
        .iter()
        .map(|c| ((c[0] - radius).max(a), (c[0] + radius).min(b)))
        .filter(|(lo, hi)| hi > lo)
        .collect();
    spans.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut total = 0.0;
    let mut current: Option<(f64, f64)> = None;
    for (lo, hi) in spans {
        current = match current {
            Some((clo, chi)) if lo <= chi => Some((clo, chi.max(hi))),
            Some((clo, chi)) => {
                total += chi - clo;
                Some((lo, hi))
            }
            None => Some((lo, hi)),
        };
    }
    if let Some((lo, hi)) = current {
        total += hi - lo;
    }
    total
}

fn inside_rect(p: &Point, lo: &[f64], hi: &[f64]) -> bool {
    p[0] >= lo[0] && p[0] <= hi[0] && p[1] >= lo[1] && p[1] <= hi[1]
}

fn covered(p: &Point, centres: &[Point], radius: f64, skip: Option<usize>) -> bool {
    centres
        .iter()
        .enumerate()
        .any(|(j, c)| Some(j) != skip && distance(p, c) < radius)
}

fn wrap(theta: f64) -> f64 {
    theta.rem_euclid(TAU)
}

fn disc_union_area(dom: &Domain, centres: &[Point], r: f64) -> f64 {
    let (lo, hi) = (dom.lower(), dom.upper());
    let mut twice_area = 0.0;

    for (i, c) in centres.iter().enumerate() {
        let mut cuts = vec![0.0, TAU];
        for (j, o) in centres.iter().enumerate() {
            let d = distance(c, o);
            if j != i && d > 0.0 && d < 2.0 * r {
                let phi = (o[1] - c[1]).atan2(o[0] - c[0]);
                let half = (d / (2.0 * r)).acos();
                cuts.push(wrap(phi - half));
                cuts.push(wrap(phi + half));
            }
        }
        for &x in &[lo[0], hi[0]] {
            let u = (x - c[0]) / r;
            if u.abs() < 1.0 {
                cuts.push(wrap(u.acos()));
                cuts.push(wrap(-u.acos()));
            }
        }
        for &y in &[lo[1], hi[1]] {
            let v = (y - c[1]) / r;
            if v.abs() < 1.0 {
                cuts.push(wrap(v.asin()));
                cuts.push(wrap(std::f64::consts::PI - v.asin()));
            }
        }
        cuts.sort_by(f64::total_cmp);
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if b - a <= 0.0 {
                continue;
            }
            let m = 0.5 * (a + b);
            let p = [c[0] + r * m.cos(), c[1] + r * m.sin()];
            if inside_rect(&p, lo, hi) && !covered(&p, centres, r, Some(i)) {
                twice_area += r * r * (b - a) + c[0] * r * (b.sin() - a.sin()) - c[1] * r * (b.cos() - a.cos());
            }
        }
    }

    let corners = [[lo[0], lo[1]], [hi[0], lo[1]], [hi[0], hi[1]], [lo[0], hi[1]]];
    for k in 0..4 {
        let (p, q) = (corners[k], corners[(k + 1) % 4]);
        let dir = [q[0] - p[0], q[1] - p[1]];
        let len2 = dir[0] * dir[0] + dir[1] * dir[1];
        let mut cuts = vec![0.0, 1.0];
        for c in centres {
            // |p + u·dir − c|² = r²
            let f = [p[0] - c[0], p[1] - c[1]];
            let b = f[0] * dir[0] + f[1] * dir[1];
            let disc = b * b - len2 * (f[0] * f[0] + f[1] * f[1] - r * r);
            if disc > 0.0 {
                let s = disc.sqrt();
                for u in [(-b - s) / len2, (-b + s) / len2] {
                    if u > 0.0 && u < 1.0 {
                        cuts.push(u);
                    }
                }
            }
        }
        cuts.sort_by(f64::total_cmp);
        let at = |u: f64| [p[0] + u * dir[0], p[1] + u * dir[1]];
        for w in cuts.windows(2) {
            if w[1] <= w[0] {
                continue;
            }
            if covered(&at(0.5 * (w[0] + w[1])), centres, r, None) {
                let (a, b) = (at(w[0]), at(w[1]));
                twice_area += a[0] * b[1] - b[0] * a[1];
            }
        }
    }
    0.5 * twice_area
}
