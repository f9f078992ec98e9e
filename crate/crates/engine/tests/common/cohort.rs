//! Synthetic Assignment 3 submissions written to disk, one directory each.

use std::fs;
use std::path::Path;

use autograde_core::SubmissionRef;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::nb::notebook_json;

pub const UNRELIABLE_TAG: &str = "# cohort-tag: unreliable";

pub const DATA_FILE: &str = "year,population\n0,12\n5,48\n10,160\n15,420\n20,760\n25,930\n";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Variant {
    /// The mock replies with prose to every code-bearing prompt.
    pub unreliable: bool,
    pub syntax_error: bool,
    pub bad_normalise: bool,
    pub bad_logistic: bool,
    pub bad_wave: bool,
    pub bad_gradient: bool,
    pub even_split: bool,
}

impl Variant {
    pub fn random(rng: &mut impl Rng) -> Variant {
        Variant {
            bad_normalise: rng.random_bool(0.3),
            bad_logistic: rng.random_bool(0.15),
            bad_wave: rng.random_bool(0.15),
            bad_gradient: rng.random_bool(0.1),
            even_split: rng.random_bool(0.3),
            ..Variant::default()
        }
    }
}

fn code(v: &Variant) -> String {
    let mut s = String::from("import math\n\n");
    if v.unreliable {
        s.push_str(UNRELIABLE_TAG);
        s.push('\n');
    }
    s.push_str(
        "def load_data(text):\n    \"\"\"Return (times, values) from CSV text with a header row.\"\"\"\n    times, values = [], []\n    for line in text.strip().splitlines()[1:]:\n        t, y = line.split(',')\n        times.append(float(t))\n        values.append(float(y))\n    return times, values\n\n",
    );
    s.push_str("def normalise(values):\n    \"\"\"Scale values linearly onto [0, 1].\"\"\"\n    lo, hi = min(values), max(values)\n");
    s.push_str(if v.bad_normalise {
        "    return [(x - lo) / hi for x in values]\n\n"
    } else {
        "    return [(x - lo) / (hi - lo) for x in values]\n\n"
    });
    s.push_str("def logistic(t, K, r, A0):\n    \"\"\"Logistic growth with capacity K, rate r and start value A0.\"\"\"\n");
    s.push_str(if v.bad_logistic {
        "    return K / (1 + math.exp(-r * t))\n\n"
    } else {
        "    return K / (1 + (K - A0) / A0 * math.exp(-r * t))\n\n"
    });
    s.push_str("def wave(t, a, b, c):\n    \"\"\"Gaussian pulse of height a centred on b with width c.\"\"\"\n");
    s.push_str(if v.bad_wave {
        "    return a * math.exp(-(t - b) ** 2 / c ** 2)\n\n"
    } else {
        "    return a * math.exp(-(t - b) ** 2 / (2 * c ** 2))\n\n"
    });
    s.push_str("def calculate_gradients(a, c, d):\n    \"\"\"Gradient of the quadratic bowl centred on (1, 2, 3).\"\"\"\n");
    s.push_str(if v.bad_gradient {
        "    return [2 * (1 - a), 2 * (2 - c), 2 * (3 - d)]\n\n"
    } else {
        "    return [2 * (a - 1), 2 * (c - 2), 2 * (d - 3)]\n\n"
    });
    s.push_str(
        "def gradient_descent(grad_fn, x0, lr, steps):\n    \"\"\"Fixed-step descent from x0.\"\"\"\n    x = list(x0)\n    for _ in range(steps):\n        g = grad_fn(*x)\n        x = [xi - lr * gi for xi, gi in zip(x, g)]\n    return x\n\n",
    );
    s.push_str("def optimize_gas_injection(total):\n    \"\"\"Split the available gas between the two wells.\"\"\"\n    total = max(total, 0.0)\n");
    s.push_str(if v.even_split {
        "    return [0.5 * total, 0.5 * total]\n"
    } else {
        "    return [0.8 * total, 0.2 * total]\n"
    });
    s
}

const ANALYSIS: &str = "with open('data_file.csv') as fh:\n    years, population = load_data(fh.read())\nscaled = normalise(population)\nfitted_params = {'K': 1000.0, 'r': 0.3512, 'A0': 12.0}\nresiduals = [p - logistic(t, **fitted_params) for t, p in zip(years, population)]\nbest = gradient_descent(calculate_gradients, [0, 0, 0], 0.1, 200)\nallocation = optimize_gas_injection(10)\n";

pub fn cells(v: &Variant) -> Vec<(&'static str, String)> {
    let mut out = vec![
        ("markdown", "# Assignment 3\n\nWe fit a bounded growth curve to the town census and then tune a gas-lift split.\n".to_string()),
        ("code", code(v)),
        ("markdown", "The census levels off near one thousand, so a logistic curve is a better match than an exponential. It cannot capture later decline.\n".to_string()),
        ("code", ANALYSIS.to_string()),
        ("markdown", "A learning rate of 0.1 converges in a few dozen steps; 1.0 oscillates. We stop after 200 iterations. Residuals are small but positive in later years. Sources: course notes. No generative tools were used.\n".to_string()),
    ];
    if v.syntax_error {
        out.push(("code", "def plot_results(:\n    pass\n".to_string()));
    }
    out
}

pub fn notebook(v: &Variant) -> String {
    let c = cells(v);
    let refs: Vec<(&str, &str)> = c.iter().map(|(k, s)| (*k, s.as_str())).collect();
    notebook_json(&refs)
}

/// Writes `<root>/<id>/<id>.ipynb` and its data file.
pub fn write_submission(root: &Path, id: &str, v: &Variant) -> SubmissionRef {
    write_raw(root, id, notebook(v).as_bytes())
}

pub fn write_raw(root: &Path, id: &str, notebook: &[u8]) -> SubmissionRef {
    let dir = root.join(id);
    fs::create_dir_all(&dir).unwrap();
    let nb = dir.join(format!("{id}.ipynb"));
    fs::write(&nb, notebook).unwrap();
    fs::write(dir.join("data_file.csv"), DATA_FILE).unwrap();
    SubmissionRef {
        submission_id: id.into(),
        student_id: format!("student-{id}"),
        source_path: nb.to_string_lossy().into_owned(),
        assignment_id: "assignment3".into(),
    }
}

pub fn id(i: usize) -> String {
    format!("s{i:03}")
}

/// `n` submissions with random bug variants; indices in `unreliable` carry
/// the tag.
pub fn cohort(root: &Path, n: usize, unreliable: &[usize], seed: u64) -> (Vec<SubmissionRef>, Vec<Variant>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut refs = Vec::with_capacity(n);
    let mut variants = Vec::with_capacity(n);
    for i in 0..n {
        let mut v = Variant::random(&mut rng);
        v.unreliable = unreliable.contains(&i);
        refs.push(write_submission(root, &id(i), &v));
        variants.push(v);
    }
    (refs, variants)
}
