#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PAMAP2_LABELS: [u32; 10] = [0, 1, 2, 3, 4, 5, 6, 17, 12, 0];
const MHEALTH_LABELS: [u32; 9] = [0, 1, 2, 3, 4, 9, 10, 11, 5];

fn noise(rng: &mut ChaCha8Rng, sd: f64) -> f64 {
    (rng.random::<f64>() + rng.random::<f64>() + rng.random::<f64>() - 1.5) * 2.0 * sd
}

/// Nine PAMAP2-style subject files: headerless, space separated, 54 columns,
/// heart rate sampled on every third row with `NaN` between.
pub fn write_pamap2(dir: &Path) -> Vec<PathBuf> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let sedentary = [1, 2, 3, 9, 10, 11];
    (101..=109)
        .map(|s| {
            let offset = noise(&mut rng, 6.0);
            let mut body = String::new();
            for i in 0..90usize {
                let label = PAMAP2_LABELS[(i / 9 + s as usize) % PAMAP2_LABELS.len()];
                let active = !sedentary.contains(&label) && label != 0;
                let t = 5.0 + i as f64 * 0.01;
                let hr = if i % 3 == 0 && !(s % 2 == 0 && i == 0) {
                    format!("{:.0}", 88.0 + offset + if active { 22.0 } else { 0.0 } + noise(&mut rng, 9.0))
                } else {
                    "NaN".to_string()
                };
                write!(body, "{t:.2} {label} {hr}").unwrap();
                for _unit in 0..3 {
                    write!(body, " {:.3}", 32.0 + noise(&mut rng, 1.0)).unwrap();
                    let scale = if active { 3.0 } else { 0.5 };
                    for _ in 0..12 {
                        write!(body, " {:.3}", noise(&mut rng, scale)).unwrap();
                    }
                    for _ in 0..4 {
                        write!(body, " {:.3}", noise(&mut rng, 0.5)).unwrap();
                    }
                }
                body.push('\n');
            }
            let p = dir.join(format!("subject{s}.dat"));
            std::fs::write(&p, body).unwrap();
            p
        })
        .collect()
}

/// Ten mHealth-style subject files: headerless, tab separated, 24 columns.
pub fn write_mhealth(dir: &Path) -> Vec<PathBuf> {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    (1..=10)
        .map(|s| {
            let mut body = String::new();
            for i in 0..80usize {
                let label = MHEALTH_LABELS[(i / 8 + s) % MHEALTH_LABELS.len()];
                let moving = [4, 5, 9, 10, 11].contains(&label);
                let scale = if moving { 4.0 } else { 0.6 };
                let mut cells: Vec<String> = Vec::with_capacity(24);
                for _ in 0..3 {
                    cells.push(format!("{:.4}", noise(&mut rng, scale)));
                }
                for _ in 0..2 {
                    cells.push(format!("{:.4}", noise(&mut rng, 0.3)));
                }
                for _ in 0..18 {
                    cells.push(format!("{:.4}", noise(&mut rng, scale)));
                }
                cells.push(label.to_string());
                body.push_str(&cells.join("\t"));
                body.push('\n');
            }
            let p = dir.join(format!("mHealth_subject{s}.log"));
            std::fs::write(&p, body).unwrap();
            p
        })
        .collect()
}
