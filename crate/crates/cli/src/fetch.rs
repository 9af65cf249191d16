use std::fs;
use std::path::Path;

use addunet::data::decode_image;
use addunet::{Error, Result};

pub fn kodak_names(count: usize) -> Vec<String> {
    (1..=count.min(24)).map(|i| format!("kodim{i:02}.png")).collect()
}

/// Downloads `kodimNN.png` files from `base_url` into `dest`, skipping files
/// that are already present and decode cleanly.
pub fn run(dest: &Path, base_url: &str, count: usize) -> Result<()> {
    if count == 0 || count > 24 {
        return Err(Error::Config(format!("--count must be in 1..=24, got {count}")));
    }
    if !(base_url.starts_with("http://") || base_url.starts_with("https://")) {
        return Err(Error::Config(format!("base url must start with http:// or https://, got `{base_url}`")));
    }
    fs::create_dir_all(dest).map_err(|e| Error::io(dest, e))?;
    let base = base_url.trim_end_matches('/');
    for name in kodak_names(count) {
        let path = dest.join(&name);
        if fs::read(&path).ok().is_some_and(|b| decode_image(&b).is_ok()) {
            println!("have  {name}");
            continue;
        }
        let url = format!("{base}/{name}");
        let bytes = ureq::get(&url)
            .call()
            .and_then(|mut r| r.body_mut().with_config().limit(64 << 20).read_to_vec())
            .map_err(|e| Error::Network(format!("{url}: {e}")))?;
        decode_image(&bytes).map_err(|e| Error::Format(format!("{url}: {e}")))?;
        fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
        println!("fetched {name} ({} bytes)", bytes.len());
    }
    Ok(())
}
