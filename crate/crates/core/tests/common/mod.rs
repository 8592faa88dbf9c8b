//! Brute-force reference implementations shared by the oracle suites.
#![allow(dead_code)]

use cseg::BinaryMask;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const MORPH_SIZES: [usize; 8] = [1, 2, 3, 10, 15, 19, 20, 25];

pub fn footprint(k: usize) -> Vec<(isize, isize)> {
    let half = k as f64 / 2.0;
    let a = ((k - 1) / 2) as isize;
    let mut out = Vec::new();
    for r in 0..k {
        for c in 0..k {
            let dy = (r as f64 + 0.5 - half) / half;
            let dx = (c as f64 + 0.5 - half) / half;
            if dy * dy + dx * dx <= 1.0 {
                out.push((r as isize - a, c as isize - a));
            }
        }
    }
    out
}

pub fn at(m: &BinaryMask, r: isize, c: isize) -> Option<bool> {
    let (h, w) = m.shape();
    (r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w).then(|| m.is_set(r as usize, c as usize))
}

pub fn brute_dilate(m: &BinaryMask, fp: &[(isize, isize)]) -> BinaryMask {
    let (h, w) = m.shape();
    BinaryMask::from_fn(h, w, |r, c| {
        fp.iter().any(|&(dr, dc)| at(m, r as isize + dr, c as isize + dc) == Some(true))
    })
}

// reflected footprint, pixels outside the image impose nothing
pub fn brute_erode(m: &BinaryMask, fp: &[(isize, isize)]) -> BinaryMask {
    let (h, w) = m.shape();
    BinaryMask::from_fn(h, w, |r, c| {
        fp.iter().all(|&(dr, dc)| at(m, r as isize - dr, c as isize - dc) != Some(false))
    })
}

pub fn flood_components(m: &BinaryMask) -> Vec<Vec<(usize, usize)>> {
    let (h, w) = m.shape();
    let mut seen = vec![false; h * w];
    let mut comps = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !m.is_set(r, c) || seen[r * w + c] {
                continue;
            }
            let mut stack = vec![(r, c)];
            seen[r * w + c] = true;
            let mut comp = Vec::new();
            while let Some((pr, pc)) = stack.pop() {
                comp.push((pr, pc));
                for dr in -1isize..=1 {
                    for dc in -1isize..=1 {
                        let (nr, nc) = (pr as isize + dr, pc as isize + dc);
                        if at(m, nr, nc) == Some(true) && !seen[nr as usize * w + nc as usize] {
                            seen[nr as usize * w + nc as usize] = true;
                            stack.push((nr as usize, nc as usize));
                        }
                    }
                }
            }
            comps.push(comp);
        }
    }
    comps
}

pub fn brute_top_k(m: &BinaryMask, k: usize) -> BinaryMask {
    let comps = flood_components(m);
    if comps.len() < k {
        return m.clone();
    }
    // discovery order is row-major first-pixel order
    let mut idx: Vec<usize> = (0..comps.len()).collect();
    idx.sort_by_key(|&i| (std::cmp::Reverse(comps[i].len()), i));
    let (h, w) = m.shape();
    let mut out = BinaryMask::zeros(h, w);
    for &i in &idx[..k] {
        for &(r, c) in &comps[i] {
            out.set(r, c, true);
        }
    }
    out
}

pub fn bernoulli_mask(rng: &mut ChaCha8Rng, n: usize, density: f64) -> BinaryMask {
    let bits: Vec<bool> = (0..n * n).map(|_| rng.random_bool(density)).collect();
    BinaryMask::from_bools(n, n, &bits).unwrap()
}

pub fn random_mask(rng: &mut ChaCha8Rng, n: usize) -> BinaryMask {
    let density = rng.random_range(0.05..0.95);
    bernoulli_mask(rng, n, density)
}

pub fn sparse_mask(rng: &mut ChaCha8Rng, n: usize) -> BinaryMask {
    // mostly sparse so that distances are large and varied
    let density = if rng.random_bool(0.8) {
        rng.random_range(0.001..0.05)
    } else {
        rng.random_range(0.05..0.9)
    };
    let bits: Vec<bool> = (0..n * n).map(|_| rng.random_bool(density)).collect();
    BinaryMask::from_bools(n, n, &bits).unwrap()
}

pub fn points(m: &BinaryMask) -> Vec<(f64, f64)> {
    let (h, w) = m.shape();
    (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .filter(|&(r, c)| m.is_set(r, c))
        .map(|(r, c)| (r as f64, c as f64))
        .collect()
}

pub fn brute_hausdorff(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let (pa, pb) = (points(a), points(b));
    let (h, w) = a.shape();
    match (pa.is_empty(), pb.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return ((h * h + w * w) as f64).sqrt(),
        _ => {}
    }
    let directed = |x: &[(f64, f64)], y: &[(f64, f64)]| {
        x.iter()
            .map(|p| {
                y.iter()
                    .map(|q| ((p.0 - q.0).powi(2) + (p.1 - q.1).powi(2)).sqrt())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    directed(&pa, &pb).max(directed(&pb, &pa))
}

pub fn brute_auroc(scores: &[f64], labels: &[u8]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1 && labels[j] == 0 {
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
    }
    wins / pairs
}


/// `(|C ∩ S|, |S|)` by visiting every pixel.
pub fn coverage_counts(c: &BinaryMask, s: &BinaryMask) -> (usize, usize) {
    let (h, w) = s.shape();
    let (mut inter, mut area) = (0, 0);
    for r in 0..h {
        for col in 0..w {
            if s.is_set(r, col) {
                area += 1;
                if c.is_set(r, col) {
                    inter += 1;
                }
            }
        }
    }
    (inter, area)
}
