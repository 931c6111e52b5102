//! Subsequence motif discovery with SAX words and random projection.
//!
//! Every sliding window is reduced to a short symbolic word. Repeated
//! rounds hide a random subset of word positions and count, for each pair
//! of windows, how often the remaining symbols agree. Pairs that collide
//! unusually often are checked on the raw data with z-normalized
//! Euclidean distance.

use std::collections::HashMap;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaxConfig {
    pub window: usize,
    pub paa_segments: usize,
    pub alphabet: usize,
    pub projection_iters: usize,
    pub mask_size: usize,
    pub seed: u64,
}

impl Default for SaxConfig {
    fn default() -> Self {
        Self { window: 8, paa_segments: 4, alphabet: 4, projection_iters: 10, mask_size: 2, seed: 42 }
    }
}

impl SaxConfig {
    pub fn validate(&self, len: usize) -> Result<()> {
        if !(2..=10).contains(&self.alphabet) {
            return Err(Error::Config(format!("alphabet size {} outside [2, 10]", self.alphabet)));
        }
        if self.paa_segments == 0 || self.paa_segments > self.window {
            return Err(Error::Config(format!(
                "PAA segments {} must lie in [1, window = {}]",
                self.paa_segments, self.window
            )));
        }
        if self.mask_size >= self.paa_segments {
            return Err(Error::Config(format!(
                "mask size {} must be below the word length {}",
                self.mask_size, self.paa_segments
            )));
        }
        if self.window < 2 || self.window > len {
            return Err(Error::Config(format!("window {} does not fit series of length {len}", self.window)));
        }
        Ok(())
    }
}

/// Standard-normal quantiles splitting the line into `a` equiprobable bins.
pub fn breakpoints(a: usize) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    (1..a).map(|i| n.inverse_cdf(i as f64 / a as f64)).collect()
}

pub fn znorm(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mu = x.iter().sum::<f64>() / n;
    let sd = (x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n).sqrt();
    if sd < 1e-8 {
        vec![0.0; x.len()]
    } else {
        x.iter().map(|v| (v - mu) / sd).collect()
    }
}

/// Piecewise aggregate approximation; segments may split samples
/// fractionally when `segments` does not divide the length.
pub fn paa(x: &[f64], segments: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; segments];
    // Each sample contributes `segments` slots; segment s owns slots [s*n, (s+1)*n).
    for (i, v) in x.iter().enumerate() {
        for slot in i * segments..(i + 1) * segments {
            out[slot / n] += v;
        }
    }
    out.iter_mut().for_each(|s| *s /= n as f64);
    out
}

/// SAX word of every sliding window, keyed by start index.
pub fn sax_words(x: &[f64], cfg: &SaxConfig) -> Result<Vec<(usize, String)>> {
    cfg.validate(x.len())?;
    let bps = breakpoints(cfg.alphabet);
    let middle = (b'a' + (cfg.alphabet / 2) as u8) as char;
    Ok((0..=x.len() - cfg.window)
        .map(|s| {
            let win = &x[s..s + cfg.window];
            let mu = win.iter().sum::<f64>() / win.len() as f64;
            let sd = (win.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / win.len() as f64).sqrt();
            let word = if sd < 1e-8 {
                std::iter::repeat_n(middle, cfg.paa_segments).collect()
            } else {
                paa(&znorm(win), cfg.paa_segments)
                    .iter()
                    .map(|m| (b'a' + bps.iter().filter(|b| *m >= **b).count() as u8) as char)
                    .collect()
            };
            (s, word)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotifResult {
    pub pair: (usize, usize),
    pub distance: f64,
    pub occurrences: Vec<usize>,
    pub collision_count: u32,
}

fn znorm_dist(x: &[f64], w: usize, a: usize, b: usize) -> f64 {
    let (p, q) = (znorm(&x[a..a + w]), znorm(&x[b..b + w]));
    p.iter().zip(&q).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
}

/// Up to `top` motifs ranked by verified distance (closest first).
/// Windows that overlap (`|i - j| < window`) never pair up, and later
/// motifs may not overlap the members of earlier ones.
pub fn find_motifs(x: &[f64], cfg: &SaxConfig, top: usize) -> Result<Vec<MotifResult>> {
    if x.len() < 2 * cfg.window {
        return Err(Error::Shape(format!(
            "motif search needs at least {} points for window {}, got {}",
            2 * cfg.window,
            cfg.window,
            x.len()
        )));
    }
    let words: Vec<Vec<u8>> = sax_words(x, cfg)?.into_iter().map(|(_, w)| w.into_bytes()).collect();
    let m = words.len();
    let w = cfg.window;
    let mut collisions = vec![0u32; m * m];
    let mut rng = crate::rng::seeded(cfg.seed);
    for _ in 0..cfg.projection_iters {
        let masked = sample(&mut rng, cfg.paa_segments, cfg.mask_size).into_vec();
        let mut buckets: HashMap<Vec<u8>, Vec<usize>> = HashMap::new();
        for (s, word) in words.iter().enumerate() {
            let key: Vec<u8> = word
                .iter()
                .enumerate()
                .filter(|(p, _)| !masked.contains(p))
                .map(|(_, c)| *c)
                .collect();
            buckets.entry(key).or_default().push(s);
        }
        for members in buckets.values() {
            for (a, &i) in members.iter().enumerate() {
                for &j in &members[a + 1..] {
                    if j - i >= w {
                        collisions[i * m + j] += 1;
                        collisions[j * m + i] += 1;
                    }
                }
            }
        }
    }

    let nonzero: Vec<f64> = (0..m)
        .flat_map(|i| (i + 1..m).map(move |j| (i, j)))
        .map(|(i, j)| collisions[i * m + j])
        .filter(|&c| c > 0)
        .map(f64::from)
        .collect();
    if nonzero.is_empty() {
        return Ok(Vec::new());
    }
    let mean = nonzero.iter().sum::<f64>() / nonzero.len() as f64;
    let sd = (nonzero.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / nonzero.len() as f64).sqrt();
    let threshold = mean + 2.0 * sd;
    let mut candidates: Vec<(usize, usize, f64, u32)> = (0..m)
        .flat_map(|i| (i + w..m).map(move |j| (i, j)))
        .filter_map(|(i, j)| {
            let c = collisions[i * m + j];
            // Pairs that collided under every projection always qualify,
            // even when saturated counts push the threshold past the cap.
            let pass = c > 0 && (f64::from(c) > threshold || c as usize == cfg.projection_iters);
            pass.then(|| (i, j, znorm_dist(x, w, i, j), c))
        })
        .collect();
    candidates.sort_by(|a, b| a.2.total_cmp(&b.2).then(b.3.cmp(&a.3)).then((a.0, a.1).cmp(&(b.0, b.1))));

    let overlaps = |s: usize, t: usize| s.abs_diff(t) < w;
    let mut out: Vec<MotifResult> = Vec::new();
    for (i, j, dist, count) in candidates {
        if out.len() >= top {
            break;
        }
        if out.iter().any(|r| [r.pair.0, r.pair.1].iter().any(|&p| overlaps(p, i) || overlaps(p, j))) {
            continue;
        }
        let radius = 2.0 * dist;
        let mut near: Vec<(f64, usize)> = (0..m)
            .map(|s| (znorm_dist(x, w, s, i).min(znorm_dist(x, w, s, j)), s))
            .filter(|(d, s)| *d <= radius || *s == i || *s == j)
            .collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut occurrences: Vec<usize> = vec![i, j];
        for (_, s) in near {
            if !occurrences.iter().any(|&o| overlaps(o, s)) {
                occurrences.push(s);
            }
        }
        occurrences.sort_unstable();
        out.push(MotifResult { pair: (i, j), distance: dist, occurrences, collision_count: count });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn quartile_breakpoints() {
        let b = breakpoints(4);
        assert_eq!(b.len(), 3);
        assert!((b[0] + 0.6745).abs() < 1e-4);
        assert!(b[1].abs() < 1e-12);
        assert!((b[2] - 0.6745).abs() < 1e-4);
    }

    #[test]
    fn ramp_gives_ab() {
        let cfg = SaxConfig { window: 8, paa_segments: 2, alphabet: 2, mask_size: 1, ..Default::default() };
        let words = sax_words(&(0..8).map(f64::from).collect::<Vec<_>>(), &cfg).unwrap();
        assert_eq!(words, vec![(0, "ab".to_owned())]);
    }

    #[test]
    fn constant_window_is_middle_symbol() {
        let cfg = SaxConfig { window: 4, paa_segments: 4, alphabet: 4, ..Default::default() };
        let words = sax_words(&[3.0; 6], &cfg).unwrap();
        assert_eq!(words.len(), 3);
        assert!(words.iter().all(|(_, w)| w == "cccc"));
    }

    #[test]
    fn word_count_and_paa_fractions() {
        let x: Vec<f64> = (0..30).map(|t| (t as f64).sin()).collect();
        let cfg = SaxConfig { window: 7, paa_segments: 3, alphabet: 5, ..Default::default() };
        assert_eq!(sax_words(&x, &cfg).unwrap().len(), 30 - 7 + 1);
        // 7 points into 3 segments: the middle segment takes 2/3 of point 2,
        // all of point 3 and 2/3 of point 4.
        let p = paa(&[1.0, 1.0, 1.0, 4.0, 4.0, 4.0, 4.0], 3);
        assert!((p[0] - 1.0).abs() < 1e-12);
        assert!((p[1] - 22.0 / 7.0).abs() < 1e-12);
        assert!((p[2] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn bad_configs_are_rejected() {
        let x = vec![0.0; 40];
        let bad = |cfg: SaxConfig| sax_words(&x, &cfg).is_err();
        assert!(bad(SaxConfig { alphabet: 11, ..Default::default() }));
        assert!(bad(SaxConfig { alphabet: 1, ..Default::default() }));
        assert!(bad(SaxConfig { paa_segments: 9, ..Default::default() }));
        assert!(bad(SaxConfig { mask_size: 4, ..Default::default() }));
        assert!(bad(SaxConfig { window: 41, ..Default::default() }));
    }

    #[test]
    fn too_short_series_is_rejected() {
        let cfg = SaxConfig { window: 20, ..Default::default() };
        assert!(matches!(find_motifs(&[0.0; 39], &cfg, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn exact_duplicate_pair() {
        let mut rng = crate::rng::seeded(12);
        let mut x: Vec<f64> = (0..120).map(|_| rng.random_range(0.0..1.0)).collect();
        let pattern: Vec<f64> = (0..10).map(|t| (t as f64 * 0.6).sin() * 3.0).collect();
        x[15..25].copy_from_slice(&pattern);
        x[80..90].copy_from_slice(&pattern);
        let cfg = SaxConfig { window: 10, ..Default::default() };
        let motifs = find_motifs(&x, &cfg, 3).unwrap();
        assert_eq!(motifs[0].pair, (15, 80));
        assert_eq!(motifs[0].distance, 0.0);
        assert_eq!(motifs[0].collision_count, cfg.projection_iters as u32);
        for pair in motifs.windows(2) {
            assert!(pair[0].distance <= pair[1].distance);
        }
        for m in &motifs {
            assert!(m.pair.1 - m.pair.0 >= cfg.window);
        }
        assert_eq!(motifs, find_motifs(&x, &cfg, 3).unwrap());
    }
}
