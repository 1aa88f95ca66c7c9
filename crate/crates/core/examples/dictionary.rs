//! Builds the SS-Hyb and SS-HybX weight dictionaries for one look
//! direction, reports their composition and stores one as a WDC1 file.

use std::sync::Arc;
use std::time::Instant;

use hybss::noise_fields::{DictionaryConfig, DictionaryVariant, ModelKind, NoiseFieldLibrary, WeightDictionary};
use hybss::spatial::{freefield_atf_for, glasses_array, Direction, GridDims};
use hybss::stft::StftConfig;

fn main() -> hybss::Result<()> {
    let atf = Arc::new(freefield_atf_for(
        &glasses_array(),
        GridDims::default(),
        &StftConfig::default(),
    )?);
    let target = Direction::horizontal_deg(60.0);
    for variant in [DictionaryVariant::SsHyb, DictionaryVariant::SsHybX] {
        let start = Instant::now();
        let lib = NoiseFieldLibrary::new(atf.clone(), DictionaryConfig::with_variant(variant))?;
        let dict = lib.build_dictionary(&target)?;
        let count = |pred: fn(&ModelKind) -> bool| lib.kinds().iter().filter(|k| pred(k)).count();
        println!(
            "{variant:?}: M = {} (identity {}, isotropic {}, anisotropic {}, plane waves {}), built in {:.2} s",
            dict.num_models(),
            count(|k| matches!(k, ModelKind::Identity)),
            count(|k| matches!(k, ModelKind::Isotropic)),
            count(|k| matches!(k, ModelKind::UnimodalAnisotropic { .. })),
            count(|k| matches!(k, ModelKind::PlaneWave { .. })),
            start.elapsed().as_secs_f64()
        );
        if variant == DictionaryVariant::SsHyb {
            let path = std::env::temp_dir().join("look60.wdc");
            dict.save(&path)?;
            let back = WeightDictionary::load(&path)?;
            println!("  stored {} ({} models reloaded)", path.display(), back.num_models());
        }
    }
    Ok(())
}
