use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::special::t_two_tailed;
use super::{degenerate, ScoreDataset, StatsError};

/// Inner join of two datasets on submission id, in the order of `x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Joined {
    pub ids: Vec<String>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub unpaired_x: usize,
    pub unpaired_y: usize,
}

pub fn join(x: &ScoreDataset, y: &ScoreDataset) -> Joined {
    let mut out = Joined {
        ids: Vec::new(),
        x: Vec::new(),
        y: Vec::new(),
        unpaired_x: 0,
        unpaired_y: 0,
    };
    for (id, sx) in x.entries() {
        match y.get(id) {
            Some(sy) => {
                out.ids.push(id.clone());
                out.x.push(*sx);
                out.y.push(sy);
            }
            None => out.unpaired_x += 1,
        }
    }
    out.unpaired_y = y.len() - out.ids.len();
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
    pub unpaired: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub slope: f64,
    pub intercept: f64,
    pub n: usize,
}

struct Moments {
    mx: f64,
    my: f64,
    sxx: f64,
    syy: f64,
    sxy: f64,
}

fn moments(x: &[f64], y: &[f64]) -> Moments {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut m = Moments { mx, my, sxx: 0.0, syy: 0.0, sxy: 0.0 };
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        m.sxx += dx * dx;
        m.syy += dy * dy;
        m.sxy += dx * dy;
    }
    m
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|a| *a == v[0])
}

/// Product-moment correlation over the inner join with a two-tailed p-value
/// from Student's t on n − 2 degrees of freedom.
pub fn pearson(x: &ScoreDataset, y: &ScoreDataset) -> Result<CorrelationResult, StatsError> {
    let j = join(x, y);
    let n = j.ids.len();
    if n < 3 {
        return Err(degenerate("fewer than three paired scores"));
    }
    if is_constant(&j.x) || is_constant(&j.y) {
        return Err(degenerate("constant series"));
    }
    let m = moments(&j.x, &j.y);
    let r = (m.sxy / libm::sqrt(m.sxx * m.syy)).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_value = if r.abs() == 1.0 {
        0.0
    } else {
        t_two_tailed(r * libm::sqrt(df / (1.0 - r * r)), df)
    };
    Ok(CorrelationResult {
        r,
        p_value,
        n,
        unpaired: j.unpaired_x + j.unpaired_y,
    })
}

/// Ordinary least squares of y on x over the inner join.
pub fn linfit(x: &ScoreDataset, y: &ScoreDataset) -> Result<RegressionResult, StatsError> {
    let j = join(x, y);
    let n = j.ids.len();
    if n < 2 {
        return Err(degenerate("fewer than two paired scores"));
    }
    if is_constant(&j.x) {
        return Err(degenerate("constant predictor"));
    }
    let m = moments(&j.x, &j.y);
    let slope = m.sxy / m.sxx;
    Ok(RegressionResult {
        slope,
        intercept: m.my - slope * m.mx,
        n,
    })
}
