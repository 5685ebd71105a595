#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uwsim::imageio::{self, Rgb8};
use uwsim::{DepthMap, LinearImage, WaterCoefficients};
use walkdir::WalkDir;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> LinearImage {
    let data = (0..w * h).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    LinearImage::new(w, h, data).unwrap()
}

pub fn random_coefficients(rng: &mut ChaCha8Rng) -> WaterCoefficients {
    let beta = [rng.gen_range(0.005..3.0), rng.gen_range(0.005..3.0), rng.gen_range(0.005..3.0)];
    let veil = [rng.gen(), rng.gen(), rng.gen()];
    WaterCoefficients::new("rand", beta, veil).unwrap()
}

/// Smooth depth ramp between `near` and `far` with a little texture.
pub fn ramp_depth(w: usize, h: usize, near: f64, far: f64, phase: f64) -> DepthMap {
    let data = (0..h)
        .flat_map(|y| {
            (0..w).map(move |x| {
                let t = (y as f64 + 0.5) / h as f64;
                near + (far - near) * t + 0.25 * ((x as f64 * 0.7 + phase).sin())
            })
        })
        .collect();
    DepthMap::new(w, h, data).unwrap()
}

pub fn random_rgb8(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Rgb8 {
    let mut bytes = vec![0u8; w * h * 3];
    rng.fill(bytes.as_mut_slice());
    Rgb8 { width: w, height: h, bytes }
}

/// Writes `n` RGB-D pairs under `root/rgb` and `root/depth`; every fourth
/// pair goes into a `sub/` directory. Some depth pixels are invalid.
pub fn write_fixture_dataset(root: &Path, n: usize, w: usize, h: usize, seed: u64) -> (PathBuf, PathBuf) {
    let rgb_root = root.join("rgb");
    let depth_root = root.join("depth");
    let mut r = rng(seed);
    for i in 0..n {
        let rel = if i % 4 == 3 { format!("sub/img_{i:03}") } else { format!("img_{i:03}") };
        imageio::write_png_rgb8(&rgb_root.join(format!("{rel}.png")), &random_rgb8(&mut r, w, h)).unwrap();
        let mut depth = ramp_depth(w, h, 0.5 + i as f64 * 0.3, 4.0 + i as f64, i as f64);
        depth.values_mut()[0] = f64::NAN;
        depth.values_mut()[w + 1] = 0.0;
        imageio::write_pfm(&depth_root.join(format!("{rel}.pfm")), &depth).unwrap();
    }
    (rgb_root, depth_root)
}

/// Relative path -> file contents for every file under `root`.
pub fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    WalkDir::new(root)
        .into_iter()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().is_file())
        .map(|e| (e.path().strip_prefix(root).unwrap().to_path_buf(), fs::read(e.path()).unwrap()))
        .collect()
}

pub fn uwsim<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    Command::new(env!("CARGO_BIN_EXE_uwsim"))
        .args(args)
        .env_remove("UWSIM_CONFIG")
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}
