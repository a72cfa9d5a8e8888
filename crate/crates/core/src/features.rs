//! The fixed 574-column feature layout: one-hot encodings, trimer counts and
//! siRNA thermodynamic descriptors.
//!
//! | block    | columns     | width |
//! |----------|-------------|-------|
//! | one-hot  | `0..361`    | 4·19 siRNA + 5·57 mRNA |
//! | trimers  | `361..550`  | 4³ siRNA + 5³ mRNA |
//! | thermo   | `550..574`  | 24 |
//!
//! Trimers are enumerated lexicographically with the alphabet order
//! A < U < C < G (< X for the mRNA).

use crate::seqmodel::{
    base_index, is_self_complementary, mrna_symbol_index, MrnaContext, SirnaRecord, SirnaSeq,
    MRNA_LEN, SIRNA_LEN,
};

pub const ONE_HOT_LEN: usize = 4 * SIRNA_LEN + 5 * MRNA_LEN;
pub const SIRNA_TRIMERS: usize = 64;
pub const MRNA_TRIMERS: usize = 125;
pub const TRIMER_LEN: usize = SIRNA_TRIMERS + MRNA_TRIMERS;
pub const THERMO_LEN: usize = 24;
pub const FEATURE_LEN: usize = ONE_HOT_LEN + TRIMER_LEN + THERMO_LEN;

/// Nearest-neighbour dinucleotide parameters in kcal/mol, indexed
/// `[first][second]` with the A, U, C, G order.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermoTables {
    pub delta_g: [[f64; 4]; 4],
    pub delta_h: [[f64; 4]; 4],
    pub g_init: f64,
    pub g_end: f64,
    pub g_sym: f64,
    pub h_init: f64,
    pub h_end: f64,
}

impl Default for ThermoTables {
    fn default() -> Self {
        Self {
            delta_g: [
                [-0.93, -1.10, -2.24, -2.08],
                [-1.33, -0.93, -2.35, -2.11],
                [-2.11, -2.08, -3.26, -2.36],
                [-2.35, -2.24, -3.42, -3.26],
            ],
            delta_h: [
                [-6.82, -9.38, -11.40, -10.48],
                [-7.69, -6.82, -12.44, -10.44],
                [-10.44, -10.48, -13.39, -10.64],
                // GC enthalpy is -14.882 in the source table
                [-12.44, -11.40, -14.882, -13.39],
            ],
            g_init: 4.09,
            g_end: 0.45,
            g_sym: 0.43,
            h_init: 3.61,
            h_end: 3.72,
        }
    }
}

impl ThermoTables {
    /// Same tables with the GC stacking enthalpy rounded to -14.88.
    pub fn with_rounded_gc_enthalpy() -> Self {
        let mut t = Self::default();
        t.delta_h[3][2] = -14.88;
        t
    }

    #[inline]
    fn dg(&self, a: usize, b: usize) -> f64 {
        self.delta_g[a][b]
    }

    #[inline]
    fn dh(&self, a: usize, b: usize) -> f64 {
        self.delta_h[a][b]
    }
}

/// A 574-dimensional feature row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn one_hot(&self) -> &[f64] {
        &self.0[..ONE_HOT_LEN]
    }

    pub fn trimers(&self) -> &[f64] {
        &self.0[ONE_HOT_LEN..ONE_HOT_LEN + TRIMER_LEN]
    }

    pub fn thermo(&self) -> &[f64] {
        &self.0[ONE_HOT_LEN + TRIMER_LEN..]
    }
}

fn sirna_indices(sirna: &SirnaSeq) -> [usize; SIRNA_LEN] {
    sirna.as_bytes().map(|b| base_index(b).expect("validated siRNA"))
}

fn mrna_indices(mrna: &MrnaContext) -> [usize; MRNA_LEN] {
    mrna.as_bytes()
        .map(|b| mrna_symbol_index(b).expect("validated mRNA"))
}

pub fn one_hot_features(sirna: &SirnaSeq, mrna: &MrnaContext) -> Vec<f64> {
    let mut out = vec![0.0; ONE_HOT_LEN];
    for (pos, idx) in sirna_indices(sirna).into_iter().enumerate() {
        out[4 * pos + idx] = 1.0;
    }
    let offset = 4 * SIRNA_LEN;
    for (pos, idx) in mrna_indices(mrna).into_iter().enumerate() {
        out[offset + 5 * pos + idx] = 1.0;
    }
    out
}

pub fn trimer_features(sirna: &SirnaSeq, mrna: &MrnaContext) -> Vec<f64> {
    let mut out = vec![0.0; TRIMER_LEN];
    for w in sirna_indices(sirna).windows(3) {
        out[16 * w[0] + 4 * w[1] + w[2]] += 1.0;
    }
    let (_, mrna_block) = out.split_at_mut(SIRNA_TRIMERS);
    for w in mrna_indices(mrna).windows(3) {
        mrna_block[25 * w[0] + 5 * w[1] + w[2]] += 1.0;
    }
    out
}

/// Whole-duplex energies that feed the thermodynamic block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermoBreakdown {
    pub delta_g_all: f64,
    pub delta_h_all: f64,
    pub delta_delta_g_all: f64,
    /// A/U count over the two terminal positions (0..=4).
    pub au_end_count: u32,
    pub self_complementary: bool,
}

pub fn thermo_breakdown(sirna: &SirnaSeq, tables: &ThermoTables) -> ThermoBreakdown {
    let s = sirna_indices(sirna);
    let is_au = |i: usize| u32::from(i <= 1);
    let au_end_count = is_au(s[0]) + is_au(s[SIRNA_LEN - 1]);
    // each end contributes A(k)+U(k), and at most one of those is set
    let n_end = f64::from(au_end_count);
    let self_complementary = is_self_complementary(sirna.as_bytes());
    let sym = if self_complementary { tables.g_sym } else { 0.0 };

    let (sum_g, sum_h) = s
        .windows(2)
        .fold((0.0, 0.0), |(g, h), w| (g + tables.dg(w[0], w[1]), h + tables.dh(w[0], w[1])));

    ThermoBreakdown {
        delta_g_all: tables.g_init + tables.g_end * n_end + sym + sum_g,
        delta_h_all: tables.h_init + tables.h_end * n_end + sum_h,
        delta_delta_g_all: tables.dg(s[0], s[1]) - tables.dg(s[17], s[18]) + tables.g_end * n_end,
        au_end_count,
        self_complementary,
    }
}

pub fn thermo_features(sirna: &SirnaSeq, tables: &ThermoTables) -> Vec<f64> {
    const A: usize = 0;
    const U: usize = 1;
    const C: usize = 2;
    const G: usize = 3;

    let s = sirna_indices(sirna);
    let brk = thermo_breakdown(sirna, tables);

    // 1-based position helpers
    let base_at = |n: usize, k: usize| f64::from(u8::from(s[k - 1] == n));
    let pair_at = |n: usize, m: usize, k: usize| f64::from(u8::from(s[k - 1] == n && s[k] == m));
    let base_all = |n: usize| s.iter().filter(|&&b| b == n).count() as f64 / SIRNA_LEN as f64;
    let pair_all = |n: usize, m: usize| {
        s.windows(2).filter(|w| w[0] == n && w[1] == m).count() as f64 / (SIRNA_LEN - 1) as f64
    };
    let dg_at = |k: usize| tables.dg(s[k - 1], s[k]);
    let dh_at = |k: usize| tables.dh(s[k - 1], s[k]);

    vec![
        brk.delta_delta_g_all,
        dg_at(1),
        dh_at(1),
        base_at(U, 1),
        base_at(G, 1),
        brk.delta_h_all,
        base_all(U),
        pair_at(U, U, 1),
        base_all(G),
        pair_at(G, G, 1),
        pair_at(G, C, 1),
        pair_all(G, G),
        dg_at(2),
        pair_all(U, A),
        base_at(U, 2),
        base_at(C, 1),
        pair_all(C, C),
        dg_at(18),
        pair_at(C, C, 1),
        pair_all(G, C),
        pair_at(C, G, 1),
        dg_at(13),
        pair_all(U, U),
        base_at(A, 19),
    ]
}

pub fn featurize_pair(sirna: &SirnaSeq, mrna: &MrnaContext, tables: &ThermoTables) -> FeatureVector {
    let mut v = Vec::with_capacity(FEATURE_LEN);
    v.extend(one_hot_features(sirna, mrna));
    v.extend(trimer_features(sirna, mrna));
    v.extend(thermo_features(sirna, tables));
    debug_assert_eq!(v.len(), FEATURE_LEN);
    FeatureVector(v)
}

pub fn featurize_with(record: &SirnaRecord, tables: &ThermoTables) -> FeatureVector {
    featurize_pair(&record.sirna, &record.mrna, tables)
}

pub fn featurize(record: &SirnaRecord) -> FeatureVector {
    featurize_with(record, &ThermoTables::default())
}

/// Column names in layout order, e.g. `si01_A`, `mr57_X`, `si3_AUG`,
/// `mr3_XXA`, `ddG_all`.
pub fn feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(FEATURE_LEN);
    let si = ['A', 'U', 'C', 'G'];
    let mr = ['A', 'U', 'C', 'G', 'X'];
    for pos in 1..=SIRNA_LEN {
        names.extend(si.iter().map(|b| format!("si{pos:02}_{b}")));
    }
    for pos in 1..=MRNA_LEN {
        names.extend(mr.iter().map(|b| format!("mr{pos:02}_{b}")));
    }
    for a in si {
        for b in si {
            names.extend(si.iter().map(|c| format!("si3_{a}{b}{c}")));
        }
    }
    for a in mr {
        for b in mr {
            names.extend(mr.iter().map(|c| format!("mr3_{a}{b}{c}")));
        }
    }
    names.extend(
        [
            "ddG_all", "dG_1_2", "dH_1_2", "U_1", "G_1", "dH_all", "U_all", "UU_1", "G_all",
            "GG_1", "GC_1", "GG_all", "dG_2_3", "UA_all", "U_2", "C_1", "CC_all", "dG_18_19",
            "CC_1", "GC_all", "CG_1", "dG_13_14", "UU_all", "A_19",
        ]
        .map(String::from),
    );
    names
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sirna(s: &str) -> SirnaSeq {
        SirnaSeq::new(s).unwrap()
    }

    fn mrna(s: &str) -> MrnaContext {
        MrnaContext::new(s).unwrap()
    }

    const ALL_A: &str = "AAAAAAAAAAAAAAAAAAA";
    const GC_ALT: &str = "GCGCGCGCGCGCGCGCGCG";

    #[test]
    fn layout_widths() {
        assert_eq!(ONE_HOT_LEN, 361);
        assert_eq!(TRIMER_LEN, 189);
        assert_eq!(FEATURE_LEN, 574);
        assert_eq!(feature_names().len(), FEATURE_LEN);
    }

    #[test]
    fn one_hot_degenerate_sequences() {
        let v = one_hot_features(&sirna(ALL_A), &mrna(&"X".repeat(57)));
        for chunk in v[..76].chunks(4) {
            assert_eq!(chunk, [1.0, 0.0, 0.0, 0.0]);
        }
        for chunk in v[76..].chunks(5) {
            assert_eq!(chunk, [0.0, 0.0, 0.0, 0.0, 1.0]);
        }
        assert_eq!(v.iter().sum::<f64>(), 76.0);
    }

    #[test]
    fn trimer_counts() {
        let v = trimer_features(&sirna(ALL_A), &mrna(&"X".repeat(57)));
        assert_eq!(v[0], 17.0);
        assert_eq!(v[..64].iter().sum::<f64>(), 17.0);
        assert_eq!(v[64 + 124], 55.0);
        assert_eq!(v[64..].iter().sum::<f64>(), 55.0);

        let v = trimer_features(&sirna("AUAUAUAUAUAUAUAUAUA"), &mrna(&"A".repeat(57)));
        // AUA = 0*16 + 1*4 + 0, UAU = 1*16 + 0 + 1
        assert_eq!(v[4], 9.0);
        assert_eq!(v[17], 8.0);
        assert_eq!(v[..64].iter().filter(|&&c| c > 0.0).count(), 2);
    }

    #[test]
    fn all_a_thermo_golden_values() {
        let t = ThermoTables::default();
        let brk = thermo_breakdown(&sirna(ALL_A), &t);
        assert!((brk.delta_h_all - -111.71).abs() < 1e-9);
        assert!((brk.delta_g_all - -11.75).abs() < 1e-9);
        assert!((brk.delta_delta_g_all - 0.90).abs() < 1e-9);
        let f = thermo_features(&sirna(ALL_A), &t);
        assert_eq!(f.len(), THERMO_LEN);
        assert!((f[0] - 0.90).abs() < 1e-9);
        assert!((f[5] - -111.71).abs() < 1e-9);
        assert_eq!(f[6], 0.0); // U(all)
        assert_eq!(f[23], 1.0); // A(19)
    }

    #[test]
    fn alternating_gc_delta_delta_g() {
        let brk = thermo_breakdown(&sirna(GC_ALT), &ThermoTables::default());
        assert_eq!(brk.au_end_count, 0);
        assert!((brk.delta_delta_g_all - -1.06).abs() < 1e-9);
    }

    #[test]
    fn rounded_gc_enthalpy_override() {
        let exact = thermo_breakdown(&sirna(GC_ALT), &ThermoTables::default());
        let rounded = thermo_breakdown(&sirna(GC_ALT), &ThermoTables::with_rounded_gc_enthalpy());
        // nine GC steps in the alternating 19-mer
        assert!((rounded.delta_h_all - exact.delta_h_all - 9.0 * 0.002).abs() < 1e-9);
    }

    #[test]
    fn symmetry_term_never_applies_to_19_mers() {
        for s in [ALL_A, GC_ALT, "AUAUAUAUAUAUAUAUAUA", "GAUCGAUCGAUCGAUCGAU"] {
            assert!(!thermo_breakdown(&sirna(s), &ThermoTables::default()).self_complementary);
        }
    }

    #[test]
    fn featurize_is_deterministic() {
        let rec = SirnaRecord {
            sirna: sirna("UGCAUGCAUGCAUGCAUGC"),
            mrna: mrna(&format!("{}{}", "A".repeat(50), "X".repeat(7))),
            efficacy: 0.3,
            target_id: "t".into(),
            source_id: "s".into(),
        };
        let a = featurize(&rec);
        let b = featurize(&rec.clone());
        assert_eq!(a, b);
        assert_eq!(a.one_hot().len(), 361);
        assert_eq!(a.trimers().len(), 189);
        assert_eq!(a.thermo().len(), 24);
    }
}
