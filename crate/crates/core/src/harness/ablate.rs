//! Layout × encoder ablation grid.

use std::io::Write;

use log::info;
use serde::{Deserialize, Serialize};

use super::train::{train, RunLog};
use crate::config::{RunConfig, Variant};
use crate::error::Result;
use crate::events::EventStore;
use crate::tokens::Layout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    Full,
    NoMte,
    NoBie,
    NoSte,
    FineOnly,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [Self::Full, Self::NoMte, Self::NoBie, Self::NoSte, Self::FineOnly];

    pub fn apply(self, layout: Layout) -> Variant {
        let full = Variant {
            layout,
            ..Variant::default()
        };
        match self {
            Self::Full => full,
            Self::NoMte => Variant { mte: false, ..full },
            Self::NoBie => Variant { bie: false, ..full },
            Self::NoSte => Variant { ste: false, ..full },
            Self::FineOnly => Variant { fine_only: true, ..full },
        }
    }
}

/// The 15 variants in layout-major order.
pub fn full_grid() -> Vec<Variant> {
    Layout::ALL
        .iter()
        .flat_map(|&l| Ablation::ALL.iter().map(move |a| a.apply(l)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub layout: Layout,
    pub token_width: usize,
    pub best_epoch: usize,
    pub val_ap: f64,
    pub test_ap: f64,
    pub test_auc: f64,
}

/// Trains every variant with the same seed, splits and sampler settings.
pub fn ablate(store: &EventStore, base: &RunConfig, variants: &[Variant], log: &mut RunLog<'_>) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let mut cfg = base.clone();
        cfg.model.variant = variant;
        let outcome = train(store, &cfg, log, None)?;
        let r = &outcome.report;
        info!("{}: test AP {:.4}", r.variant, r.test.ap);
        rows.push(AblationRow {
            variant: r.variant.clone(),
            layout: variant.layout,
            token_width: r.token_width,
            best_epoch: r.best_epoch,
            val_ap: r.val.ap,
            test_ap: r.test.ap,
            test_auc: r.test.auc,
        });
    }
    Ok(rows)
}

pub fn write_rows_csv<W: Write>(rows: &[AblationRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
