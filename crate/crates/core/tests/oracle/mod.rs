//! Brute-force reference formulas, written independently of the library.

#![allow(dead_code)]

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

pub fn sample_std(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

/// Adjusted skewness as n / ((n-1)(n-2)) times the sum of cubed z-scores.
pub fn skewness(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let (m, s) = (mean(v), sample_std(v));
    n / ((n - 1.0) * (n - 2.0)) * v.iter().map(|x| ((x - m) / s).powi(3)).sum::<f64>()
}

/// Correlation as the mean product of z-scores.
pub fn pearson_r(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let (sx, sy) = (sample_std(x), sample_std(y));
    x.iter().zip(y).map(|(a, b)| (a - mx) / sx * (b - my) / sy).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Two-tailed Student t p-value by quadrature. With t = sqrt(df) tan(theta)
/// the density becomes proportional to cos(theta)^(df - 1) on [0, pi/2).
pub fn t_p_value(t: f64, df: f64) -> f64 {
    let theta0 = (t.abs() / df.sqrt()).atan();
    let f = |th: f64| th.cos().powf(df - 1.0);
    let simpson = |a: f64, b: f64| {
        let n = 20_000;
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let half = std::f64::consts::FRAC_PI_2;
    (simpson(theta0, half) / simpson(0.0, half)).clamp(0.0, 1.0)
}

pub fn pearson_p(x: &[f64], y: &[f64]) -> f64 {
    let r = pearson_r(x, y);
    let df = x.len() as f64 - 2.0;
    if r.abs() >= 1.0 {
        return 0.0;
    }
    t_p_value(r * (df / (1.0 - r * r)).sqrt(), df)
}

/// Least squares from the normal equations in raw sums.
pub fn linfit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    (slope, (sy - slope * sx) / n)
}

pub fn minmax(v: &[f64], top: f64) -> Vec<f64> {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    v.iter().map(|x| top * (x - lo) / (hi - lo)).collect()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1f64.max(a.abs()).max(b.abs())
}
