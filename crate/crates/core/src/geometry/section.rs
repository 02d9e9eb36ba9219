//! Exact vertical cross-sections of planar regions and their area by
//! adaptive Gauss-Kronrod integration of the section length.

use super::region::Region;

/// Sorted, pairwise disjoint closed intervals.
#[derive(Clone, Debug, Default, PartialEq)]
pub(crate) struct IntervalSet(Vec<(f64, f64)>);

impl IntervalSet {
    fn empty() -> Self {
        IntervalSet(Vec::new())
    }

    fn single(lo: f64, hi: f64) -> Self {
        if lo < hi {
            IntervalSet(vec![(lo, hi)])
        } else {
            IntervalSet::empty()
        }
    }

    pub(crate) fn length(&self) -> f64 {
        self.0.iter().map(|(a, b)| b - a).sum()
    }

    fn union(&self, other: &IntervalSet) -> IntervalSet {
        let mut all: Vec<(f64, f64)> = self.0.iter().chain(&other.0).copied().collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(all.len());
        for (a, b) in all {
            match out.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        IntervalSet(out)
    }

    fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < self.0.len() && j < other.0.len() {
            let (a0, a1) = self.0[i];
            let (b0, b1) = other.0[j];
            let lo = a0.max(b0);
            let hi = a1.min(b1);
            if lo < hi {
                out.push((lo, hi));
            }
            if a1 < b1 {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalSet(out)
    }

    fn difference(&self, other: &IntervalSet) -> IntervalSet {
        let mut out = Vec::new();
        for &(a0, a1) in &self.0 {
            let mut lo = a0;
            for &(b0, b1) in &other.0 {
                if b1 <= lo || b0 >= a1 {
                    continue;
                }
                if b0 > lo {
                    out.push((lo, b0));
                }
                lo = lo.max(b1);
                if lo >= a1 {
                    break;
                }
            }
            if lo < a1 {
                out.push((lo, a1));
            }
        }
        IntervalSet(out)
    }
}

/// Restricts `window` by the half-plane `a*x + b*y <= c` at abscissa `x`.
fn half_plane_section(a: f64, b: f64, c: f64, x: f64, window: (f64, f64)) -> IntervalSet {
    let rhs = c - a * x;
    if b > 0.0 {
        IntervalSet::single(window.0, window.1.min(rhs / b))
    } else if b < 0.0 {
        IntervalSet::single(window.0.max(rhs / b), window.1)
    } else if rhs >= 0.0 {
        IntervalSet::single(window.0, window.1)
    } else {
        IntervalSet::empty()
    }
}

/// Cross-section of a planar region at abscissa `x`, clipped to `window` in y.
pub(crate) fn section(region: &Region, x: f64, window: (f64, f64)) -> IntervalSet {
    match region {
        Region::Ball(b) => {
            let dx = x - b.center[0];
            let r2 = b.radius * b.radius - dx * dx;
            if r2 <= 0.0 {
                return IntervalSet::empty();
            }
            let h = r2.sqrt();
            IntervalSet::single((b.center[1] - h).max(window.0), (b.center[1] + h).min(window.1))
        }
        Region::AxisBox(b) => {
            if x < b.lower[0] || x > b.upper[0] {
                IntervalSet::empty()
            } else {
                IntervalSet::single(b.lower[1].max(window.0), b.upper[1].min(window.1))
            }
        }
        Region::RotatedSquare(s) => {
            let mut lo = window.0;
            let mut hi = window.1;
            for [a, b, c] in s.half_planes() {
                let part = half_plane_section(a, b, c, x, (lo, hi));
                match part.0.first() {
                    Some(&(l, h)) => {
                        lo = l;
                        hi = h;
                    }
                    None => return IntervalSet::empty(),
                }
            }
            IntervalSet::single(lo, hi)
        }
        Region::HalfSpace(h) => half_plane_section(h.normal[0], h.normal[1], h.offset, x, window),
        Region::Union(parts) => parts
            .iter()
            .map(|p| section(p, x, window))
            .reduce(|a, b| a.union(&b))
            .unwrap_or_default(),
        Region::Intersection(parts) => {
            let mut acc = IntervalSet::single(window.0, window.1);
            for p in parts {
                if acc.0.is_empty() {
                    break;
                }
                acc = acc.intersect(&section(p, x, window));
            }
            acc
        }
        Region::Difference(a, b) => {
            let keep = section(a, x, window);
            if keep.0.is_empty() {
                return keep;
            }
            keep.difference(&section(b, x, window))
        }
    }
}

/// Abscissae where the section length may jump or lose smoothness.
fn breakpoints(region: &Region, out: &mut Vec<f64>) {
    match region {
        Region::Ball(b) => {
            out.extend([b.center[0] - b.radius, b.center[0], b.center[0] + b.radius]);
        }
        Region::AxisBox(b) => out.extend([b.lower[0], b.upper[0]]),
        Region::RotatedSquare(s) => out.extend(s.vertices().iter().map(|v| v[0])),
        Region::HalfSpace(h) => {
            if h.normal[1] == 0.0 {
                out.push(h.offset / h.normal[0]);
            }
        }
        Region::Union(parts) | Region::Intersection(parts) => {
            parts.iter().for_each(|p| breakpoints(p, out))
        }
        Region::Difference(a, b) => {
            breakpoints(a, out);
            breakpoints(b, out);
        }
    }
}

/// Area of `region` inside the rectangle `[x0, x1] x [y0, y1]`.
pub(crate) fn planar_area(region: &Region, x: (f64, f64), y: (f64, f64), tol: f64) -> f64 {
    let mut cuts = vec![x.0, x.1];
    breakpoints(region, &mut cuts);
    cuts.retain(|c| c.is_finite() && *c >= x.0 && *c <= x.1);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let panels = (cuts.len() - 1).max(1) as f64;
    let f = |t: f64| section(region, t, y).length();
    cuts.windows(2)
        .map(|w| adaptive_gk(&f, w[0], w[1], tol / panels, 0))
        .sum()
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adaptive_gk(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (value, err) = gk15(f, a, b);
    if err <= tol || depth >= 48 || (b - a) < 1e-13 {
        return value;
    }
    let m = 0.5 * (a + b);
    adaptive_gk(f, a, m, 0.5 * tol, depth + 1) + adaptive_gk(f, m, b, 0.5 * tol, depth + 1)
}
