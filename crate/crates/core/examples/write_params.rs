//! Writes the preset parameter files used by the `tickms` command line into
//! `examples/params/`.

use std::path::Path;

use tickms::cli::ParamsFile;
use tickms::markov::SpreadChainParams;
use tickms::ms::MsParams;
use tickms::presets;
use tickms::simulate::ModelParams;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/params");
    std::fs::create_dir_all(&dir)?;
    let msb = MsParams::new(SpreadChainParams::bernoulli(presets::high_activity_chain().spread_stationary()[0])?, 0.0481, 0.00151)?;
    let files = [
        ("ms_high.toml", ModelParams::Ms(presets::high_activity_ms())),
        ("ms_low.toml", ModelParams::Ms(presets::low_activity_ms())),
        ("msb_high.toml", ModelParams::Ms(msb)),
        ("dcmm_high.toml", ModelParams::Dcmm(presets::high_activity_dcmm(50))),
    ];
    for (name, params) in files {
        let path = dir.join(name);
        std::fs::write(&path, ParamsFile::from_model(&params).to_toml())?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
