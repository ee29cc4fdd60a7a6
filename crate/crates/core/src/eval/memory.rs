//! Parameter and byte accounting for embedding layouts.

use std::fmt;

use crate::error::{Error, Result};

/// Per-object storage costs in bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemoryModel {
    pub float_bytes: u64,
    pub int_bytes: u64,
}

impl Default for MemoryModel {
    fn default() -> Self {
        MemoryModel {
            float_bytes: 16,
            int_bytes: 12,
        }
    }
}

impl MemoryModel {
    pub fn validate(&self) -> Result<()> {
        if self.float_bytes == 0 || self.int_bytes == 0 {
            return Err(Error::Config("byte costs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    OneHot { nodes: u64, dim: u64 },
    MultiHot { s: u64, t: u64, dim: u64, nodes: u64 },
    Kd { block_size: u64, blocks: u64, dim: u64, nodes: u64 },
}

impl Layout {
    pub fn nodes(&self) -> u64 {
        match *self {
            Layout::OneHot { nodes, .. } | Layout::MultiHot { nodes, .. } | Layout::Kd { nodes, .. } => nodes,
        }
    }

    pub fn dim(&self) -> u64 {
        match *self {
            Layout::OneHot { dim, .. } | Layout::MultiHot { dim, .. } | Layout::Kd { dim, .. } => dim,
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layout::OneHot { .. } => write!(f, "one_hot"),
            Layout::MultiHot { s, t, .. } => write!(f, "multi_hot(s={s},t={t})"),
            Layout::Kd { block_size, blocks, .. } => write!(f, "kd(K={block_size},D={blocks})"),
        }
    }
}

/// Exact parameter count and byte cost of a layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemoryCost {
    pub params: u128,
    pub bytes: u128,
}

impl MemoryCost {
    /// Parameters in millions, half-up to 2 decimals, as hundredths.
    pub fn params_millions_centi(&self) -> u128 {
        (self.params + 5_000) / 10_000
    }

    /// Bytes in MiB, half-up to 2 decimals, as hundredths.
    pub fn megabytes_centi(&self) -> u128 {
        (self.bytes * 100 + (1 << 19)) >> 20
    }

    pub fn params_millions_display(&self) -> String {
        format_centi(self.params_millions_centi())
    }

    pub fn megabytes_display(&self) -> String {
        format_centi(self.megabytes_centi())
    }
}

/// Render a hundredths count as a decimal with two places and thousands separators.
pub fn format_centi(centi: u128) -> String {
    let whole = (centi / 100).to_string();
    let mut grouped = String::with_capacity(whole.len() + whole.len() / 3);
    for (i, ch) in whole.chars().enumerate() {
        if i > 0 && (whole.len() - i).is_multiple_of(3) {
            grouped.push(',');
        }
        grouped.push(ch);
    }
    format!("{grouped}.{:02}", centi % 100)
}

pub fn memory_report(layout: Layout, mm: MemoryModel) -> MemoryCost {
    let (fb, ib) = (mm.float_bytes as u128, mm.int_bytes as u128);
    let (floats, ints) = match layout {
        Layout::OneHot { nodes, dim } => (nodes as u128 * dim as u128, nodes as u128),
        Layout::MultiHot { s, t, dim, nodes } => (s as u128 * dim as u128, nodes as u128 * t as u128),
        Layout::Kd {
            block_size,
            blocks,
            dim,
            nodes,
        } => (
            block_size as u128 * blocks as u128 * dim as u128,
            nodes as u128 * blocks as u128,
        ),
    };
    MemoryCost {
        params: floats + ints,
        bytes: floats * fb + ints * ib,
    }
}

/// Compression ratios of a compressed layout against its one-hot baseline,
/// under three conventions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CompressionRatios {
    /// Full one-hot params (matrix plus index integers) over compressed params.
    pub params_full: f64,
    /// Embedding-matrix params `|V|·d` only over compressed params.
    pub params_matrix_only: f64,
    /// Quotient of the 2-decimal displayed values; this is how the
    /// published table's ratios come out.
    pub params_displayed: f64,
    pub bytes_full: f64,
    pub bytes_displayed: f64,
}

/// Which parameter-ratio convention a published value matches, if any.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RatioConvention {
    Full,
    MatrixOnly,
    Displayed,
}

impl CompressionRatios {
    pub fn new(baseline: &MemoryCost, nodes: u64, dim: u64, compressed: &MemoryCost) -> Self {
        let q = |a: u128, b: u128| a as f64 / b as f64;
        CompressionRatios {
            params_full: q(baseline.params, compressed.params),
            params_matrix_only: q(nodes as u128 * dim as u128, compressed.params),
            params_displayed: q(baseline.params_millions_centi(), compressed.params_millions_centi()),
            bytes_full: q(baseline.bytes, compressed.bytes),
            bytes_displayed: q(baseline.megabytes_centi(), compressed.megabytes_centi()),
        }
    }

    /// Conventions whose 2-decimal rounding equals `printed` (in hundredths).
    pub fn params_matching(&self, printed_centi: u128) -> Vec<RatioConvention> {
        let mut out = Vec::new();
        for (conv, v) in [
            (RatioConvention::Full, self.params_full),
            (RatioConvention::MatrixOnly, self.params_matrix_only),
            (RatioConvention::Displayed, self.params_displayed),
        ] {
            if round_centi(v) == printed_centi {
                out.push(conv);
            }
        }
        out
    }
}

/// Half-up rounding of a positive ratio to hundredths.
pub fn round_centi(v: f64) -> u128 {
    (v * 100.0 + 0.5 + 1e-9).floor() as u128
}

/// Size and code settings of the four benchmark networks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DatasetPreset {
    pub name: &'static str,
    pub nodes: u64,
    pub dim: u64,
    pub s: u64,
    pub t: u64,
    pub kd_block_size: u64,
    pub kd_blocks: u64,
}

impl DatasetPreset {
    pub fn one_hot(&self) -> Layout {
        Layout::OneHot {
            nodes: self.nodes,
            dim: self.dim,
        }
    }

    pub fn multi_hot(&self) -> Layout {
        Layout::MultiHot {
            s: self.s,
            t: self.t,
            dim: self.dim,
            nodes: self.nodes,
        }
    }

    pub fn kd(&self) -> Layout {
        Layout::Kd {
            block_size: self.kd_block_size,
            blocks: self.kd_blocks,
            dim: self.dim,
            nodes: self.nodes,
        }
    }
}

pub const DATASET_PRESETS: [DatasetPreset; 4] = [
    DatasetPreset { name: "blogcatalog", nodes: 10_312, dim: 256, s: 128, t: 8, kd_block_size: 16, kd_blocks: 8 },
    DatasetPreset { name: "dblp", nodes: 16_753, dim: 256, s: 128, t: 8, kd_block_size: 16, kd_blocks: 8 },
    DatasetPreset { name: "flickr", nodes: 23_664, dim: 256, s: 256, t: 16, kd_block_size: 16, kd_blocks: 16 },
    DatasetPreset { name: "youtube", nodes: 1_138_499, dim: 256, s: 8192, t: 32, kd_block_size: 256, kd_blocks: 32 },
];

pub fn preset(name: &str) -> Option<&'static DatasetPreset> {
    let lower = name.to_ascii_lowercase();
    DATASET_PRESETS
        .iter()
        .find(|p| p.name == lower || (lower == "blog" && p.name == "blogcatalog"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn blog() -> &'static DatasetPreset {
        preset("blog").unwrap()
    }

    #[test]
    fn blog_one_hot_row() {
        let c = memory_report(blog().one_hot(), MemoryModel::default());
        assert_eq!(c.params, 2_650_184);
        assert_eq!(c.bytes, 42_361_696);
        assert_eq!(c.params_millions_display(), "2.65");
        assert_eq!(c.megabytes_display(), "40.40");
    }

    #[test]
    fn blog_multi_hot_row_and_ratios() {
        let mm = MemoryModel::default();
        let base = memory_report(blog().one_hot(), mm);
        let c = memory_report(blog().multi_hot(), mm);
        assert_eq!(c.params, 115_264);
        assert_eq!(c.bytes, 1_514_240);
        assert_eq!(c.megabytes_display(), "1.44");
        let r = CompressionRatios::new(&base, blog().nodes, blog().dim, &c);
        assert_eq!(round_centi(r.params_full), 2299);
        assert_eq!(round_centi(r.params_matrix_only), 2290);
        assert_eq!(round_centi(r.params_displayed), 2208);
        assert_eq!(round_centi(r.bytes_displayed), 2806);
        assert_eq!(r.params_matching(2208), vec![RatioConvention::Displayed]);
    }

    #[test]
    fn kd_matches_multi_hot_at_equal_budget() {
        let mm = MemoryModel::default();
        for p in &DATASET_PRESETS {
            if p.kd_block_size * p.kd_blocks == p.s && p.kd_blocks == p.t {
                assert_eq!(memory_report(p.kd(), mm), memory_report(p.multi_hot(), mm));
            }
        }
    }

    #[test]
    fn thousands_separator() {
        assert_eq!(format_centi(446_029), "4,460.29");
        assert_eq!(format_centi(5), "0.05");
        assert_eq!(format_centi(100_000_000), "1,000,000.00");
    }

    proptest! {
        #[test]
        fn centi_rounding_matches_rational_oracle(bytes in 0u128..1u128 << 40) {
            let c = MemoryCost { params: bytes, bytes };
            // oracle: floor(x + 1/2) for x = bytes·100 / 2^20, compared as rationals
            let num = bytes * 100;
            let den = 1u128 << 20;
            let mut want = num / den;
            if 2 * (num % den) >= den {
                want += 1;
            }
            prop_assert_eq!(c.megabytes_centi(), want);
        }
    }
}
