#![allow(dead_code)]

use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

use image::{GrayImage, RgbImage};
use rand::{rngs::StdRng, Rng, SeedableRng};

pub const BIN: &str = env!("CARGO_BIN_EXE_relic");

pub fn relic(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("relic runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub const CUBE_OBJ: &str = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1\n\
f 1 4 3 2\nf 5 6 7 8\nf 1 2 6 5\nf 3 4 8 7\nf 2 3 7 6\nf 1 5 8 4\n";

/// The cube without its top face.
pub const OPEN_BOX_OBJ: &str = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1\n\
f 1 4 3 2\nf 1 2 6 5\nf 3 4 8 7\nf 2 3 7 6\nf 1 5 8 4\n";

pub fn solid_rgb(path: &Path, w: u32, h: u32, rgb: [u8; 3]) {
    RgbImage::from_pixel(w, h, image::Rgb(rgb)).save(path).unwrap();
}

pub fn rgb_from_fn(path: &Path, w: u32, h: u32, f: impl Fn(u32, u32) -> [u8; 3]) {
    RgbImage::from_fn(w, h, |x, y| image::Rgb(f(x, y))).save(path).unwrap();
}

pub fn gray_from_fn(path: &Path, w: u32, h: u32, f: impl Fn(u32, u32) -> u8) {
    GrayImage::from_fn(w, h, |x, y| image::Luma([f(x, y)])).save(path).unwrap();
}

pub fn read_rgb(path: &Path) -> RgbImage {
    image::open(path).unwrap().to_rgb8()
}

/// The 9-light grid lu, lv ∈ {-0.6, 0, 0.6}.
pub fn nine_lights() -> Vec<[f64; 3]> {
    let mut out = vec![];
    for lv in [-0.6, 0.0, 0.6] {
        for lu in [-0.6, 0.0, 0.6] {
            out.push([lu, lv, (1.0f64 - lu * lu - lv * lv).sqrt()]);
        }
    }
    out
}

pub fn biquadratic(a: &[f64; 6], lu: f64, lv: f64) -> f64 {
    a[0] * lu * lu + a[1] * lv * lv + a[2] * lu * lv + a[3] * lu + a[4] * lv + a[5]
}

/// Random per-pixel, per-channel coefficients whose luminance stays
/// inside (0, 1) over the upper hemisphere.
pub fn random_coefficients(seed: u64, w: u32, h: u32) -> Vec<[[f64; 6]; 3]> {
    let mut rng = StdRng::seed_from_u64(seed);
    (0..w * h)
        .map(|_| {
            std::array::from_fn(|_| {
                let mut a: [f64; 6] = std::array::from_fn(|_| rng.random_range(-0.1..0.1));
                a[5] = rng.random_range(0.4..0.6);
                a
            })
        })
        .collect()
}

/// Writes one 8-bit PNG per light plus a manifest listing them.
pub fn write_ptm_stack(dir: &Path, coeffs: &[[[f64; 6]; 3]], w: u32, h: u32, lights: &[[f64; 3]]) -> std::path::PathBuf {
    let mut manifest = String::from("# synthetic stack\n");
    for (i, l) in lights.iter().enumerate() {
        let name = format!("light{i}.png");
        rgb_from_fn(&dir.join(&name), w, h, |x, y| {
            let px = &coeffs[(y * w + x) as usize];
            std::array::from_fn(|c| (biquadratic(&px[c], l[0], l[1]).clamp(0.0, 1.0) * 255.0).round() as u8)
        });
        manifest.push_str(&format!("{name} {} {} {}\n", l[0], l[1], l[2]));
    }
    let path = dir.join("stack.txt");
    std::fs::write(&path, manifest).unwrap();
    path
}

/// A running `relic serve` child and the address it announced.
pub struct ServeProcess {
    pub child: Child,
    pub addr: String,
}

impl ServeProcess {
    pub fn start(data_dir: &Path, listen: &str) -> Result<Self, String> {
        let mut child = Command::new(BIN)
            .args(["serve", "--listen", listen, "--data-dir"])
            .arg(data_dir)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| e.to_string())?;
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap())
            .read_line(&mut line)
            .map_err(|e| e.to_string())?;
        match line.trim().strip_prefix("listening on ") {
            Some(addr) => Ok(ServeProcess {
                addr: addr.to_string(),
                child,
            }),
            None => {
                let out = child.wait_with_output().map_err(|e| e.to_string())?;
                Err(format!("server did not start: {}", String::from_utf8_lossy(&out.stderr)))
            }
        }
    }

    pub fn base(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Sends SIGTERM and returns whether the process exited successfully.
    pub fn terminate(mut self) -> bool {
        let pid = self.child.id().to_string();
        let sent = Command::new("kill").args(["-TERM", &pid]).status().map(|s| s.success()).unwrap_or(false);
        sent && self.child.wait().map(|s| s.success()).unwrap_or(false)
    }
}

impl Drop for ServeProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
