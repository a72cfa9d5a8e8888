//! Direct, string-based transcription of the feature definitions. Shares
//! no code with the crate.

use std::collections::HashMap;

use oligoicp_core::seqmodel::{MrnaContext, SirnaRecord, SirnaSeq};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
pub const SI: &str = "AUCG";
pub const M: &str = "AUCGX";

pub fn dg() -> HashMap<&'static str, f64> {
    HashMap::from([
        ("AA", -0.93), ("AU", -1.10), ("AC", -2.24), ("AG", -2.08),
        ("UA", -1.33), ("UU", -0.93), ("UC", -2.35), ("UG", -2.11),
        ("CA", -2.11), ("CU", -2.08), ("CC", -3.26), ("CG", -2.36),
        ("GA", -2.35), ("GU", -2.24), ("GC", -3.42), ("GG", -3.26),
    ])
}

pub fn dh() -> HashMap<&'static str, f64> {
    HashMap::from([
        ("AA", -6.82), ("AU", -9.38), ("AC", -11.40), ("AG", -10.48),
        ("UA", -7.69), ("UU", -6.82), ("UC", -12.44), ("UG", -10.44),
        ("CA", -10.44), ("CU", -10.48), ("CC", -13.39), ("CG", -10.64),
        ("GA", -12.44), ("GU", -11.40), ("GC", -14.882), ("GG", -13.39),
    ])
}

/// 1-based character access.
pub fn at(s: &str, k: usize) -> char {
    s.chars().nth(k - 1).unwrap()
}

/// 1-based inclusive slice `s[a:b]`.
pub fn sl(s: &str, a: usize, b: usize) -> String {
    s.chars().skip(a - 1).take(b - a + 1).collect()
}

pub fn n_ind(s: &str, n: char, k: usize) -> f64 {
    if at(s, k) == n {
        1.0
    } else {
        0.0
    }
}

pub fn nm_ind(s: &str, nm: &str, k: usize) -> f64 {
    if sl(s, k, k + 1) == nm {
        1.0
    } else {
        0.0
    }
}

pub fn n_all(s: &str, n: char) -> f64 {
    (1..=19).map(|k| n_ind(s, n, k)).sum::<f64>() / 19.0
}

pub fn nm_all(s: &str, nm: &str) -> f64 {
    (1..=18).map(|k| nm_ind(s, nm, k)).sum::<f64>() / 18.0
}

pub fn revcomp(s: &str) -> String {
    s.chars()
        .rev()
        .map(|c| match c {
            'A' => 'U',
            'U' => 'A',
            'C' => 'G',
            'G' => 'C',
            _ => unreachable!(),
        })
        .collect()
}

/// Returns (features, delta_g_all).
pub fn naive(sirna: &str, mrna: &str) -> (Vec<f64>, f64) {
    let mut f = Vec::new();
    for i in 1..=19 {
        for n in SI.chars() {
            f.push(if at(sirna, i) == n { 1.0 } else { 0.0 });
        }
    }
    for j in 1..=57 {
        for n in M.chars() {
            f.push(if at(mrna, j) == n { 1.0 } else { 0.0 });
        }
    }
    for a in SI.chars() {
        for b in SI.chars() {
            for c in SI.chars() {
                let t: String = [a, b, c].iter().collect();
                f.push((1..=17).filter(|&i| sl(sirna, i, i + 2) == t).count() as f64);
            }
        }
    }
    for a in M.chars() {
        for b in M.chars() {
            for c in M.chars() {
                let t: String = [a, b, c].iter().collect();
                f.push((1..=55).filter(|&j| sl(mrna, j, j + 2) == t).count() as f64);
            }
        }
    }

    let (g, h) = (dg(), dh());
    let g_of = |a: usize| g[sl(sirna, a, a + 1).as_str()];
    let h_of = |a: usize| h[sl(sirna, a, a + 1).as_str()];
    let n_end = n_ind(sirna, 'A', 1) + n_ind(sirna, 'U', 1) + n_ind(sirna, 'A', 19) + n_ind(sirna, 'U', 19);
    let sym = if revcomp(sirna) == sirna { 0.43 } else { 0.0 };
    let g_all = 4.09 + 0.45 * n_end + sym + (1..=18).map(g_of).sum::<f64>();
    let h_all = 3.61 + 3.72 * n_end + (1..=18).map(h_of).sum::<f64>();
    let ddg_all = g_of(1) - g_of(18) + 0.45 * n_end;

    f.extend([
        ddg_all,
        g_of(1),
        h_of(1),
        n_ind(sirna, 'U', 1),
        n_ind(sirna, 'G', 1),
        h_all,
        n_all(sirna, 'U'),
        nm_ind(sirna, "UU", 1),
        n_all(sirna, 'G'),
        nm_ind(sirna, "GG", 1),
        nm_ind(sirna, "GC", 1),
        nm_all(sirna, "GG"),
        g_of(2),
        nm_all(sirna, "UA"),
        n_ind(sirna, 'U', 2),
        n_ind(sirna, 'C', 1),
        nm_all(sirna, "CC"),
        g_of(18),
        nm_ind(sirna, "CC", 1),
        nm_all(sirna, "GC"),
        nm_ind(sirna, "CG", 1),
        g_of(13),
        nm_all(sirna, "UU"),
        n_ind(sirna, 'A', 19),
    ]);
    (f, g_all)
}

pub fn random_pair(rng: &mut ChaCha8Rng) -> (String, String) {
    let base = |rng: &mut ChaCha8Rng| SI.chars().nth(rng.random_range(0..4)).unwrap();
    let sirna: String = (0..19).map(|_| base(rng)).collect();
    let lead = if rng.random_bool(0.2) { rng.random_range(0..=19) } else { 0 };
    let trail = if rng.random_bool(0.2) { rng.random_range(0..=19) } else { 0 };
    let mrna: String = (0..57)
        .map(|j| if j < lead || j >= 57 - trail { 'X' } else { base(rng) })
        .collect();
    (sirna, mrna)
}

pub fn record(sirna: &str, mrna: &str) -> SirnaRecord {
    SirnaRecord {
        sirna: SirnaSeq::new(sirna).unwrap(),
        mrna: MrnaContext::new(mrna).unwrap(),
        efficacy: 0.5,
        target_id: "t".into(),
        source_id: "s".into(),
    }
}
