//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.

// `!(a <= b)` is how a NaN measurement counts as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod support;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use futures::{SinkExt, StreamExt};
use rand::{rngs::StdRng, Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use relic_core::analysis::{convert_asset, pca_bands, MultispectralStack, Provenance, SceneDocument};
use relic_core::geometry::{shapes, surface_area, volume};
use relic_core::imaging::{
    chroma_key, curtain_composite, edl_apply, ptm_eval_unclamped, ptm_fit, synthesize_stack, CurtainAxis, EdlConfig,
    PtmImage, PtmMode, ScmlStack,
};
use relic_core::{Metadata, TextureImage, Vec3};
use serde_json::{json, Value};
use support::*;
use tokio_tungstenite::tungstenite::Message;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("ptm round trip", ptm_round_trip),
        ("metering", metering),
        ("eye-dome lighting", eye_dome_lighting),
        ("chroma key and curtain", chroma_and_curtain),
        ("pca", pca),
        ("conversion fixed point", conversion_fixed_point),
        ("server", server),
        ("cli golden", cli_golden),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name:<24} {secs:7.2}s  {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<24} {secs:7.2}s  {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn rms(a: &[f32], b: &[f32]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

fn noise_image(rng: &mut StdRng, w: u32, h: u32, ch: u8) -> TextureImage {
    let data = (0..w * h * ch as u32).map(|_| rng.random::<f32>()).collect();
    TextureImage::new(w, h, ch, data).unwrap()
}

fn coefficient_rms(a: &PtmImage, b: &PtmImage) -> f64 {
    let sq: f64 = a
        .coefficients()
        .iter()
        .zip(b.coefficients())
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)))
        .sum();
    (sq / (a.coefficients().len() * 6) as f64).sqrt()
}

fn ptm_round_trip() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2024);
    let (w, h) = (64, 64);
    let coeffs = (0..w * h * 3)
        .map(|_| std::array::from_fn(|_| rng.random_range(-0.5..0.5)))
        .collect();
    let truth = PtmImage::new(w, h, 3, PtmMode::PerChannel, coeffs).unwrap();
    let lights: Vec<Vec3> = nine_lights().iter().map(|l| Vec3::new(l[0], l[1], l[2])).collect();
    let clean = synthesize_stack(&truth, &lights).unwrap();

    let started = Instant::now();
    let fit = ptm_fit(&clean).map_err(|e| e.to_string())?;
    let noiseless_time = started.elapsed();
    let coeff_rms = coefficient_rms(&fit.ptm, &truth);
    ensure!(coeff_rms <= 1e-6, "noiseless coefficient rms {coeff_rms:e} > 1e-6");

    let sigma = 0.01;
    let normal = Normal::new(0.0, sigma).unwrap();
    let noisy_images = clean
        .images()
        .iter()
        .map(|im| {
            let data = im.data().iter().map(|v| (*v as f64 + normal.sample(&mut rng)) as f32).collect();
            TextureImage::new(im.width(), im.height(), im.channels(), data).unwrap()
        })
        .collect();
    let noisy = ScmlStack::new(noisy_images, lights.clone()).unwrap();
    let started = Instant::now();
    let noisy_fit = ptm_fit(&noisy).map_err(|e| e.to_string())?;
    let noisy_time = started.elapsed();
    let noisy_rms = coefficient_rms(&noisy_fit.ptm, &truth);
    ensure!(noisy_rms <= 2.0 * sigma, "noisy coefficient rms {noisy_rms} > 2 sigma = {}", 2.0 * sigma);
    let worst_residual = noisy_fit.residual_rms.iter().cloned().fold(0.0, f64::max);
    ensure!(worst_residual <= 2.0 * sigma, "noisy residual rms {worst_residual} > 2 sigma = {}", 2.0 * sigma);

    for (i, (img, l)) in noisy.images().iter().zip(&lights).enumerate() {
        let out = ptm_eval_unclamped(&noisy_fit.ptm, *l).map_err(|e| e.to_string())?;
        let r = rms(img.data(), out.data());
        // The rendered image is stored as f32; allow its rounding only.
        ensure!(
            r <= noisy_fit.residual_rms[i] + 1e-6,
            "render at training light {i}: rms {r} > residual {}",
            noisy_fit.residual_rms[i]
        );
    }
    let total = noiseless_time + noisy_time;
    ensure!(total <= Duration::from_secs(5), "fits took {total:?} > 5 s");
    Ok(format!(
        "coeff rms {coeff_rms:.1e}; with sigma {sigma}: coeff rms {noisy_rms:.4}, residual {worst_residual:.4}; fit time {:.2}s",
        total.as_secs_f64()
    ))
}

/// Rodrigues rotation of `p` about unit `k` by `theta`.
fn rodrigues(p: [f64; 3], k: [f64; 3], theta: f64) -> [f64; 3] {
    let (s, c) = theta.sin_cos();
    let cross = [k[1] * p[2] - k[2] * p[1], k[2] * p[0] - k[0] * p[2], k[0] * p[1] - k[1] * p[0]];
    let dot = k[0] * p[0] + k[1] * p[1] + k[2] * p[2];
    std::array::from_fn(|i| p[i] * c + cross[i] * s + k[i] * dot * (1.0 - c))
}

fn metering() -> Outcome {
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    let cube = shapes::unit_cube();
    let (area, vol) = (surface_area(&cube), volume(&cube));
    ensure!((area - 6.0).abs() <= 1e-9, "cube area {area}");
    ensure!((vol - 1.0).abs() <= 1e-9, "cube volume {vol}");
    let sphere = shapes::icosphere(4, 1.0);
    let pi = std::f64::consts::PI;
    let (sa, sv) = (surface_area(&sphere), volume(&sphere));
    ensure!(rel(sa, 4.0 * pi) <= 0.01, "icosphere area {sa}");
    ensure!(rel(sv, 4.0 / 3.0 * pi) <= 0.01, "icosphere volume {sv}");

    let solids = [shapes::unit_cube(), shapes::icosphere(2, 0.8), shapes::torus(16, 8, 1.0, 0.3)];
    let mut rng = StdRng::seed_from_u64(77);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let axis = loop {
            let a: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let n = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
            if n > 1e-3 {
                break a.map(|x| x / n);
            }
        };
        let theta = rng.random_range(-pi..pi);
        let t: [f64; 3] = std::array::from_fn(|_| rng.random_range(-50.0..50.0));
        for mesh in &solids {
            let moved = mesh
                .transformed(|v| {
                    let r = rodrigues([v.x, v.y, v.z], axis, theta);
                    Vec3::new(r[0] + t[0], r[1] + t[1], r[2] + t[2])
                })
                .map_err(|e| e.to_string())?;
            worst = worst
                .max(rel(surface_area(&moved), surface_area(mesh)))
                .max(rel(volume(&moved), volume(mesh)));
        }
    }
    ensure!(worst <= 1e-6, "rigid transform changed a measure by {worst:e} relative");
    Ok(format!(
        "cube 6/1 exact to 1e-9, icosphere err {:.2}%/{:.2}%, worst rigid drift {worst:.1e}",
        100.0 * rel(sa, 4.0 * pi),
        100.0 * rel(sv, 4.0 / 3.0 * pi)
    ))
}

fn bits(img: &TextureImage) -> Vec<u32> {
    img.data().iter().map(|v| v.to_bits()).collect()
}

fn eye_dome_lighting() -> Outcome {
    let mut rng = StdRng::seed_from_u64(5);
    let config = EdlConfig::default();
    let color = noise_image(&mut rng, 24, 16, 3);
    let flat = TextureImage::filled(24, 16, 1, 0.37).unwrap();
    for s in [0.0, 0.1, 1.0, 10.0, 1000.0] {
        for radius in [1, 2, 5] {
            let out = edl_apply(&color, &flat, s, radius, &config).map_err(|e| e.to_string())?;
            ensure!(bits(&out) == bits(&color), "constant depth changed pixels at strength {s}");
        }
    }

    let depth = noise_image(&mut rng, 24, 16, 1);
    let sweep = [0.0, 0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.5, 2.0];
    let mut prev = color.clone();
    for s in sweep {
        let out = edl_apply(&color, &depth, s, 2, &config).map_err(|e| e.to_string())?;
        ensure!(
            out.data().iter().zip(prev.data()).all(|(o, p)| o <= p),
            "brightened a pixel when strength rose to {s}"
        );
        prev = out;
    }

    // Near half at depth 0.4, far half at 0.6; only the far column next to
    // the step sees a positive difference, from its one near neighbor.
    let (near, far) = (0.4f32, 0.6f32);
    let step = TextureImage::from_fn(10, 6, 1, |x, _| vec![if x < 5 { near } else { far }]).unwrap();
    let strength = 0.01;
    let out = edl_apply(&color_crop(&color, 10, 6), &step, strength, 1, &config).map_err(|e| e.to_string())?;
    let input = color_crop(&color, 10, 6);
    let shade = (-strength * (far as f64 - near as f64) * 300.0).exp();
    for y in 0..6 {
        for x in 0..10 {
            for c in 0..3 {
                let v = input.sample(x, y, c);
                let expect = if x == 5 { (v as f64 * shade) as f32 } else { v };
                ensure!(
                    out.sample(x, y, c).to_bits() == expect.to_bits(),
                    "step pixel ({x},{y},{c}): {} vs {expect}",
                    out.sample(x, y, c)
                );
            }
        }
    }
    Ok(format!("identity bytewise, sweep monotone, step factor {shade:.6e} exact"))
}

fn color_crop(img: &TextureImage, w: u32, h: u32) -> TextureImage {
    TextureImage::from_fn(w, h, img.channels(), |x, y| {
        (0..img.channels()).map(|c| img.sample(x, y, c)).collect()
    })
    .unwrap()
}

fn chroma_and_curtain() -> Outcome {
    let mut rng = StdRng::seed_from_u64(9);
    let img = noise_image(&mut rng, 16, 8, 3);
    let key = Vec3::new(0.2, 0.4, 0.6);
    let repl = Vec3::new(0.0, 1.0, 0.0);
    let out = chroma_key(&img, key, repl, 0.5, 0.0).map_err(|e| e.to_string())?;
    ensure!(bits(&out) == bits(&img), "ratio 0 is not the identity");
    let keyed = TextureImage::from_fn(4, 4, 3, |x, _| {
        if x < 2 { vec![0.2, 0.4, 0.6] } else { vec![0.9, 0.1, 0.1] }
    })
    .unwrap();
    let keyed_f32 = Vec3::new(0.2f32 as f64, 0.4f32 as f64, 0.6f32 as f64);
    let out = chroma_key(&keyed, keyed_f32, repl, 0.0, 1.0).map_err(|e| e.to_string())?;
    for y in 0..4 {
        for x in 0..4 {
            let px: Vec<f32> = (0..3).map(|c| out.sample(x, y, c)).collect();
            let expect = if x < 2 { vec![0.0, 1.0, 0.0] } else { vec![0.9, 0.1, 0.1] };
            ensure!(px == expect, "chroma pixel ({x},{y}) = {px:?}");
        }
    }

    let frames: Vec<TextureImage> = (0..2).map(|i| TextureImage::filled(8, 4, 3, i as f32).unwrap()).collect();
    let half = curtain_composite(&frames, (0.5, 0.5), CurtainAxis::Horizontal).map_err(|e| e.to_string())?;
    ensure!(half.sample(2, 1, 0) == 0.0 && half.sample(6, 1, 0) == 1.0, "pointer 0.5 split is wrong");
    let left = curtain_composite(&frames, (0.0, 0.5), CurtainAxis::Horizontal).map_err(|e| e.to_string())?;
    ensure!(left.data().iter().all(|v| *v == 1.0), "pointer 0 is not all frame 1");

    // Frames with disjoint value ranges so every pixel has one possible source.
    let mut trials = 0;
    for _ in 0..200 {
        let k = rng.random_range(2..6usize);
        let frames: Vec<TextureImage> = (0..k)
            .map(|i| {
                let data = (0..13 * 9 * 3).map(|_| i as f32 + 0.9 * rng.random::<f32>()).collect();
                TextureImage::new(13, 9, 3, data).unwrap()
            })
            .collect();
        let axis = if rng.random::<bool>() { CurtainAxis::Vertical } else { CurtainAxis::Horizontal };
        let pointer = (rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0));
        let out = curtain_composite(&frames, pointer, axis).map_err(|e| e.to_string())?;
        for (i, p) in out.data().chunks(3).enumerate() {
            let sources = frames.iter().filter(|f| &f.data()[i * 3..i * 3 + 3] == p).count();
            ensure!(sources == 1, "pixel {i} matches {sources} frames");
        }
        trials += 1;
    }

    // The same trivial cases through the binary, compared as PNG bytes.
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let s = |n: &str| p(n).to_str().unwrap().to_string();
    rgb_from_fn(&p("img.png"), 12, 6, |x, y| [(x * 20) as u8, (y * 40) as u8, 255 - (x * 9) as u8]);
    let o = relic(&["shade", "chroma", &s("img.png"), "--key", "000000", "--replacement", "00FF00", "--ratio", "0", "--tolerance", "1", "-o", &s("id.png")]);
    ensure!(o.status.success(), "cli chroma failed: {}", stderr(&o));
    ensure!(read_rgb(&p("id.png")) == read_rgb(&p("img.png")), "cli chroma ratio 0 changed pixels");
    solid_rgb(&p("red.png"), 5, 5, [255, 0, 0]);
    let o = relic(&["shade", "chroma", &s("red.png"), "--key", "FF0000", "--replacement", "00FF00", "-o", &s("green.png")]);
    ensure!(o.status.success(), "cli chroma failed: {}", stderr(&o));
    ensure!(read_rgb(&p("green.png")).pixels().all(|px| px.0 == [0, 255, 0]), "cli exact key not replaced");
    solid_rgb(&p("f0.png"), 8, 4, [1, 2, 3]);
    solid_rgb(&p("f1.png"), 8, 4, [4, 5, 6]);
    for (pointer, split) in [("0.5", 4), ("0", 0)] {
        let o = relic(&["shade", "curtain", &s("f0.png"), &s("f1.png"), "--pointer", pointer, "-o", &s("c.png")]);
        ensure!(o.status.success(), "cli curtain failed: {}", stderr(&o));
        for (x, _, px) in read_rgb(&p("c.png")).enumerate_pixels() {
            let expect = if x < split { [1, 2, 3] } else { [4, 5, 6] };
            ensure!(px.0 == expect, "cli curtain pointer {pointer}: pixel {x} = {:?}", px.0);
        }
    }
    Ok(format!("trivial examples bytewise (library and cli), {trials} membership trials"))
}

fn pca() -> Outcome {
    let mut rng = StdRng::seed_from_u64(31);
    let (w, h, n) = (64u32, 64u32, 6usize);
    let latent: Vec<Vec<f32>> = (0..3).map(|_| (0..w * h).map(|_| rng.random::<f32>()).collect()).collect();
    let bands: Vec<TextureImage> = (0..n)
        .map(|_| {
            let mix: [f32; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let data = (0..(w * h) as usize)
                .map(|p| (0..3).map(|j| mix[j] * latent[j][p]).sum::<f32>() + 0.05 * rng.random::<f32>())
                .collect();
            TextureImage::new(w, h, 1, data).unwrap()
        })
        .collect();
    let labels = (0..n).map(|i| format!("b{i}")).collect();
    let stack = MultispectralStack::new(bands, labels).map_err(|e| e.to_string())?;
    let r = pca_bands(&stack, n).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let dot: f64 = r.components[i].iter().zip(&r.components[j]).map(|(a, b)| a * b).sum();
            worst = worst.max((dot - if i == j { 1.0 } else { 0.0 }).abs());
        }
    }
    ensure!(worst <= 1e-9, "orthonormality error {worst:e}");
    let sum: f64 = r.explained_variance.iter().sum();
    ensure!((sum - 1.0).abs() <= 1e-9, "variance ratios sum to {sum}");

    let noise = Normal::new(0.0, 0.01).unwrap();
    let base: Vec<f32> = (0..w * h).map(|_| rng.random::<f32>()).collect();
    let rank1: Vec<TextureImage> = [1.0f32, 2.0, -0.5, 0.7]
        .iter()
        .map(|s| {
            let data = base.iter().map(|v| s * v + noise.sample(&mut rng) as f32).collect();
            TextureImage::new(w, h, 1, data).unwrap()
        })
        .collect();
    let stack = MultispectralStack::new(rank1, (0..4).map(|i| format!("r{i}")).collect()).map_err(|e| e.to_string())?;
    let r1 = pca_bands(&stack, 1).map_err(|e| e.to_string())?;
    let first = r1.explained_variance[0];
    ensure!(first >= 0.99, "rank-1 stack: first component explains {first}");
    Ok(format!("orthonormality {worst:.1e}, ratio sum err {:.1e}, rank-1 explains {first:.5}", (sum - 1.0).abs()))
}

fn conversion_fixed_point() -> Outcome {
    let prov = Provenance::new("OBJ", 1_650_000_000);
    let textures = BTreeMap::from([(
        "diffuse".to_string(),
        TextureImage::from_fn(8, 8, 3, |x, y| vec![x as f32 / 8.0, y as f32 / 8.0, 0.25]).unwrap(),
    )]);
    let gallery = shapes::gallery();
    ensure!(gallery.len() == 10, "corpus has {} models", gallery.len());
    for group in &gallery {
        let name = group.meshes()[0].name().to_string();
        let first = convert_asset(group, &textures, &Metadata::new(), &prov).map_err(|e| e.to_string())?;
        let dir = tempfile::tempdir().unwrap();
        first.write_dir(dir.path()).map_err(|e| e.to_string())?;
        let parsed = SceneDocument::read_dir(dir.path()).map_err(|e| e.to_string())?;
        let second = convert_asset(
            &parsed.to_group().map_err(|e| e.to_string())?,
            &parsed.textures_by_role(),
            &Metadata::new(),
            &Provenance::new("scene", 1_900_000_000),
        )
        .map_err(|e| e.to_string())?;
        ensure!(second == first, "{name}: second conversion differs");
        ensure!(parsed == first, "{name}: parsed document differs from emitted");
    }
    Ok(format!("{} models structurally equal after convert, emit, parse, convert", gallery.len()))
}

// Server ------------------------------------------------------------------

const BLOBS: usize = 1000;
const MAX_BLOB: f64 = 8.0 * 1024.0 * 1024.0;
const STATES: u64 = 500;
const FOLLOWERS: usize = 10;

fn blob_len(i: usize) -> usize {
    let mut rng = StdRng::seed_from_u64(i as u64);
    (MAX_BLOB.ln() * rng.random::<f64>()).exp().round().clamp(1.0, MAX_BLOB) as usize
}

fn blob(i: usize) -> Vec<u8> {
    let mut rng = StdRng::seed_from_u64(0x5eed_0000 + i as u64);
    let mut v = vec![0u8; blob_len(i)];
    rng.fill(&mut v[..]);
    v
}

fn server() -> Outcome {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let rt = tokio::runtime::Runtime::new().unwrap();
    let srv = ServeProcess::start(dir.path(), "127.0.0.1:0")?;
    let client = reqwest::Client::new();

    let (ids, bytes) = rt.block_on(blob_round_trips(&client, &srv.base()))?;
    let blobs_done = started.elapsed();
    let joined_late = rt.block_on(session_room(&srv.addr))?;
    let before = rt.block_on(write_story(&client, &srv.base()))?;
    ensure!(srv.terminate(), "serve did not exit cleanly on SIGTERM");

    let srv = ServeProcess::start(dir.path(), "127.0.0.1:0")?;
    let after = rt.block_on(read_story(&client, &srv.base(), &before))?;
    ensure!(after == before.snapshot, "annotations or stories changed across restart");
    for i in (0..BLOBS).step_by(97) {
        let got = rt.block_on(get_bytes(&client, &format!("{}/assets/{}", srv.base(), ids[i])))?;
        ensure!(got == blob(i), "blob {i} differs after restart");
    }
    ensure!(srv.terminate(), "restarted serve did not exit cleanly");
    let total = started.elapsed();
    ensure!(total <= Duration::from_secs(60), "server criterion took {total:?} > 60 s");
    Ok(format!(
        "{BLOBS} blobs ({:.0} MiB) bit-exact in {:.1}s; {FOLLOWERS} followers ({joined_late} joined mid-stream) saw all {STATES} states gapless; restart durable",
        bytes as f64 / 1048576.0,
        blobs_done.as_secs_f64()
    ))
}

async fn get_bytes(client: &reqwest::Client, url: &str) -> Result<Vec<u8>, String> {
    let resp = client.get(url).send().await.map_err(|e| e.to_string())?;
    ensure!(resp.status().is_success(), "GET {url}: {}", resp.status());
    Ok(resp.bytes().await.map_err(|e| e.to_string())?.to_vec())
}

async fn send_json(client: &reqwest::Client, method: reqwest::Method, url: String, body: Value) -> Result<Value, String> {
    let resp = client
        .request(method, &url)
        .header("content-type", "application/json")
        .body(body.to_string())
        .send()
        .await
        .map_err(|e| e.to_string())?;
    let status = resp.status();
    let text = resp.text().await.map_err(|e| e.to_string())?;
    ensure!(status.is_success(), "{url}: {status} {text}");
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

async fn blob_round_trips(client: &reqwest::Client, base: &str) -> Result<(Vec<String>, usize), String> {
    const WORKERS: usize = 4;
    let mut tasks = Vec::new();
    for w in 0..WORKERS {
        let (client, base) = (client.clone(), base.to_string());
        tasks.push(tokio::spawn(async move {
            let mut out = Vec::new();
            for i in (w..BLOBS).step_by(WORKERS) {
                let data = blob(i);
                let resp = client
                    .put(format!("{base}/assets?kind=raw"))
                    .body(data.clone())
                    .send()
                    .await
                    .map_err(|e| e.to_string())?;
                ensure!(resp.status().as_u16() == 201, "PUT blob {i}: {}", resp.status());
                let rec: Value = serde_json::from_slice(&resp.bytes().await.map_err(|e| e.to_string())?)
                    .map_err(|e| e.to_string())?;
                let id = rec["id"].as_str().ok_or("record without id")?.to_string();
                let got = get_bytes(&client, &format!("{base}/assets/{id}")).await?;
                ensure!(got == data, "blob {i} ({} bytes) came back different", data.len());
                out.push((i, id, data.len()));
            }
            Ok::<_, String>(out)
        }));
    }
    let mut ids = vec![String::new(); BLOBS];
    let mut total = 0;
    for t in tasks {
        for (i, id, len) in t.await.map_err(|e| e.to_string())?? {
            ids[i] = id;
            total += len;
        }
    }
    let sizes: Vec<usize> = (0..BLOBS).map(blob_len).collect();
    ensure!(sizes.iter().any(|&s| s < 16), "no tiny blobs in the sample");
    ensure!(sizes.iter().any(|&s| s > 4 << 20), "no multi-megabyte blobs in the sample");
    Ok((ids, total))
}

fn state_message(seq: u64) -> String {
    json!({"v": 1, "type": "state", "state": {
        "camera": {
            "position": [0.0, 0.0, 3.0 + seq as f64 * 0.001],
            "orientation": [0.0, 0.0, 0.0, 1.0],
            "fov_y": 45.0, "near": 0.01, "far": 100.0
        },
        "lights": [],
        "active_shader": null, "active_annotation": null, "seq": seq
    }})
    .to_string()
}

type Ws = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<tokio::net::TcpStream>>;

async fn next_json(ws: &mut Ws) -> Result<Value, String> {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(15), ws.next())
            .await
            .map_err(|_| "timed out waiting for a message".to_string())?
            .ok_or("socket closed")?
            .map_err(|e| e.to_string())?;
        if let Message::Text(t) = msg {
            return serde_json::from_str(t.as_str()).map_err(|e| e.to_string());
        }
    }
}

async fn join(url: &str, role: &str) -> Result<(Ws, Value), String> {
    let (mut ws, _) = tokio_tungstenite::connect_async(url).await.map_err(|e| e.to_string())?;
    let hello = json!({"v": 1, "type": "join", "role": role, "key": "gallery"}).to_string();
    ws.send(Message::Text(hello.into())).await.map_err(|e| e.to_string())?;
    let snapshot = next_json(&mut ws).await?;
    ensure!(snapshot["type"] == "snapshot", "{role} got {snapshot} instead of a snapshot");
    Ok((ws, snapshot))
}

/// Reads states until `STATES`, checking they continue the snapshot without gaps.
async fn follow(mut ws: Ws, snapshot: Value) -> Result<(), String> {
    let mut last = snapshot["state"]["seq"].as_u64().unwrap_or(0);
    while last < STATES {
        let msg = next_json(&mut ws).await?;
        ensure!(msg["type"] == "state", "follower got {msg}");
        let seq = msg["state"]["seq"].as_u64().ok_or("state without seq")?;
        ensure!(seq == last + 1, "follower expected seq {} but got {seq}", last + 1);
        last = seq;
    }
    Ok(())
}

async fn session_room(addr: &str) -> Result<usize, String> {
    let url = format!("ws://{addr}/session/acceptance");
    let (mut presenter, _) = join(&url, "presenter").await?;
    let early = FOLLOWERS / 2;
    let mut followers = Vec::new();
    for _ in 0..early {
        let (ws, snap) = join(&url, "follower").await?;
        followers.push(tokio::spawn(follow(ws, snap)));
    }
    let late_every = STATES / (FOLLOWERS - early + 1) as u64;
    for seq in 1..=STATES {
        presenter
            .send(Message::Text(state_message(seq).into()))
            .await
            .map_err(|e| e.to_string())?;
        if seq % late_every == 0 && followers.len() < FOLLOWERS {
            // Join while states are still flowing; the snapshot must sit mid-stream.
            let (ws, snap) = join(&url, "follower").await?;
            let at = snap["state"]["seq"].as_u64().unwrap_or(0);
            ensure!(at > 0 && at < STATES, "late follower snapshot at seq {at} is not mid-stream");
            followers.push(tokio::spawn(follow(ws, snap)));
        }
    }
    ensure!(followers.len() == FOLLOWERS, "only {} followers joined", followers.len());
    for f in followers {
        f.await.map_err(|e| e.to_string())??;
    }
    presenter.close(None).await.map_err(|e| e.to_string())?;
    Ok(FOLLOWERS - early)
}

struct Durable {
    asset: String,
    story: String,
    snapshot: Value,
}

async fn write_story(client: &reqwest::Client, base: &str) -> Result<Durable, String> {
    let doc = json!({"version": "1.0", "meshes": [{"name": "bust", "triangle_count": 64}]});
    let resp = client
        .put(format!("{base}/assets?kind=scene"))
        .body(doc.to_string())
        .send()
        .await
        .map_err(|e| e.to_string())?;
    let rec: Value = serde_json::from_slice(&resp.bytes().await.map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let asset = rec["id"].as_str().ok_or("scene upload failed")?.to_string();
    let mut stops = Vec::new();
    for order in 0..3u32 {
        let a = send_json(
            client,
            reqwest::Method::POST,
            format!("{base}/assets/{asset}/annotations"),
            json!({
                "anchor": {"position": [0.1, 0.2, 0.3], "face_index": order * 7, "barycentric": [0.2, 0.3, 0.5], "normal": [0.0, 0.0, 1.0]},
                "title": format!("stop {order}"),
                "body": "inscription detail",
                "order_index": order,
                "persisted_state": {"lights": [{"position": [1.0, 2.0, 3.0], "color": [1.0, 0.9, 0.8], "intensity": 2.0}]}
            }),
        )
        .await?;
        stops.push(a["id"].as_str().ok_or("annotation without id")?.to_string());
    }
    send_json(
        client,
        reqwest::Method::PATCH,
        format!("{base}/assets/{asset}/annotations/{}", stops[1]),
        json!({"title": "revised stop"}),
    )
    .await?;
    let first = send_json(
        client,
        reqwest::Method::POST,
        format!("{base}/stories"),
        json!({"asset_id": asset, "stops": [stops[0], stops[1]], "title": "tour", "author": "curator"}),
    )
    .await?;
    let story = first["id"].as_str().ok_or("story without id")?.to_string();
    send_json(
        client,
        reqwest::Method::POST,
        format!("{base}/stories"),
        json!({"id": story, "asset_id": asset, "stops": [stops[2], stops[0], stops[1]], "title": "tour", "author": "curator"}),
    )
    .await?;
    let mut durable = Durable {
        asset,
        story,
        snapshot: Value::Null,
    };
    durable.snapshot = read_story(client, base, &durable).await?;
    ensure!(durable.snapshot["revisions"]["revisions"].as_array().map(|r| r.len()) == Some(2), "expected two story revisions");
    Ok(durable)
}

async fn read_story(client: &reqwest::Client, base: &str, d: &Durable) -> Result<Value, String> {
    let get = |path: String| async move {
        let bytes = get_bytes(client, &format!("{base}{path}")).await?;
        serde_json::from_slice::<Value>(&bytes).map_err(|e| e.to_string())
    };
    Ok(json!({
        "record": get(format!("/assets/{}/record", d.asset)).await?,
        "annotations": get(format!("/assets/{}/annotations", d.asset)).await?,
        "story": get(format!("/stories/{}", d.story)).await?,
        "first": get(format!("/stories/{}?revision=1", d.story)).await?,
        "revisions": get(format!("/stories/{}/revisions", d.story)).await?,
    }))
}

// CLI golden ---------------------------------------------------------------

fn write_inputs(dir: &Path) {
    fs::write(dir.join("cube.obj"), CUBE_OBJ).unwrap();
    fs::write(dir.join("open.obj"), OPEN_BOX_OBJ).unwrap();
    let sphere = relic_core::geometry::write_ply(&shapes::icosphere(2, 1.0), relic_core::geometry::PlyEncoding::Ascii);
    fs::write(dir.join("sphere.ply"), sphere).unwrap();
    rgb_from_fn(&dir.join("tex.png"), 8, 8, |x, y| [(x * 30) as u8, (y * 30) as u8, 128]);
    let coeffs = random_coefficients(3, 12, 10);
    write_ptm_stack(dir, &coeffs, 12, 10, &nine_lights());
    rgb_from_fn(&dir.join("color.png"), 12, 10, |x, y| [(x * 20) as u8, (y * 25) as u8, 90]);
    gray_from_fn(&dir.join("depth.png"), 12, 10, |x, y| ((x * 13 + y * 7) % 256) as u8);
    rgb_from_fn(&dir.join("frame1.png"), 12, 10, |x, _| [0, (x * 20) as u8, 200]);
    let mut rng = StdRng::seed_from_u64(12);
    let base: Vec<u8> = (0..120).map(|_| rng.random()).collect();
    for b in 0..4u32 {
        gray_from_fn(&dir.join(format!("band{b}.png")), 12, 10, |x, y| {
            let v = base[(y * 12 + x) as usize] as u32;
            ((v * (b + 1) / 4 + x * b) % 256) as u8
        });
    }
}

fn golden_commands(inputs: &Path) -> Vec<Vec<String>> {
    let i = |n: &str| inputs.join(n).to_str().unwrap().to_string();
    let cmds: Vec<Vec<String>> = vec![
        vec!["convert".into(), i("cube.obj"), "--out".into(), "scene".into(), "--texture".into(), format!("diffuse={}", i("tex.png"))],
        vec!["convert".into(), i("sphere.ply"), "--out".into(), "sphere".into()],
        vec!["ptm".into(), "fit".into(), i("stack.txt"), "-o".into(), "fit.ptm".into()],
        vec!["ptm".into(), "render".into(), "fit.ptm".into(), "--light".into(), "0.3,-0.2,0.9".into(), "-o".into(), "relit.png".into()],
        vec!["meter".into(), i("cube.obj"), "--area".into()],
        vec!["meter".into(), i("sphere.ply"), "--volume".into()],
        vec!["meter".into(), i("open.obj"), "--volume".into()],
        vec!["meter".into(), i("cube.obj"), "--distance".into(), "0,0,0".into(), "1,1,1".into()],
        vec!["shade".into(), "edl".into(), i("color.png"), i("depth.png"), "--strength".into(), "0.5".into(), "--radius".into(), "2".into(), "-o".into(), "edl.png".into()],
        vec!["shade".into(), "chroma".into(), i("color.png"), "--key".into(), "A0C85A".into(), "--replacement".into(), "00FF00".into(), "--ratio".into(), "0.7".into(), "--tolerance".into(), "0.3".into(), "-o".into(), "chroma.png".into()],
        vec!["shade".into(), "curtain".into(), i("color.png"), i("frame1.png"), "--pointer".into(), "0.3".into(), "--axis".into(), "vertical".into(), "-o".into(), "curtain.png".into()],
        vec!["pca".into(), i("band0.png"), i("band1.png"), i("band2.png"), i("band3.png"), "--components".into(), "3".into(), "--out".into(), "pca".into()],
        vec!["render".into(), i("sphere.ply"), "--width".into(), "48".into(), "--height".into(), "40".into(), "--color".into(), "C08040".into(), "--metalness".into(), "0.3".into(), "-o".into(), "render.png".into(), "--depth".into(), "depth16.png".into()],
    ];
    cmds
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn free_port() -> u16 {
    std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

/// One full run: every batch command, then a serve session and an audit.
fn golden_run(inputs: &Path, cwd: &Path, listen: &str) -> Result<String, String> {
    let mut transcript = String::new();
    for args in golden_commands(inputs) {
        let o = Command::new(BIN).args(&args).current_dir(cwd).output().map_err(|e| e.to_string())?;
        ensure!(o.status.success(), "relic {} failed: {}", args.join(" "), stderr(&o));
        transcript.push_str(&format!("$ {}\n{}{}", args[..2].join(" "), stdout(&o), stderr(&o)));
    }
    let data = cwd.join("data");
    let mut srv = ServeProcess::start(&data, listen)?;
    let rt = tokio::runtime::Runtime::new().unwrap();
    rt.block_on(async {
        reqwest::Client::new()
            .put(format!("{}/assets?kind=raw", srv.base()))
            .body(vec![7u8; 4096])
            .send()
            .await
            .map(|_| ())
            .map_err(|e| e.to_string())
    })?;
    transcript.push_str(&format!("$ serve\nlistening on {}\n", srv.addr));
    let stderr_pipe = srv.child.stderr.take();
    ensure!(srv.terminate(), "serve did not exit cleanly");
    drop(stderr_pipe);
    let o = relic(&["audit", "--data-dir", data.to_str().unwrap()]);
    ensure!(o.status.success(), "audit failed: {}", stderr(&o));
    transcript.push_str(&format!("$ audit\n{}", stdout(&o)));
    fs::remove_dir_all(&data).map_err(|e| e.to_string())?;
    Ok(transcript)
}

fn cli_golden() -> Outcome {
    let inputs = tempfile::tempdir().unwrap();
    write_inputs(inputs.path());
    let listen = format!("127.0.0.1:{}", free_port());
    let runs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    let mut transcripts = Vec::new();
    for r in &runs {
        transcripts.push(golden_run(inputs.path(), r.path(), &listen)?);
    }
    let (a, b) = (tree(runs[0].path()), tree(runs[1].path()));
    ensure!(transcripts[0] == transcripts[1], "stdout differs between runs:\n{}\n---\n{}", transcripts[0], transcripts[1]);
    ensure!(a.keys().eq(b.keys()), "output file sets differ: {:?} vs {:?}", a.keys(), b.keys());
    for (path, bytes) in &a {
        ensure!(&b[path] == bytes, "{} differs between runs", path.display());
    }
    Ok(format!("{} commands, {} output files byte-identical across two runs", golden_commands(inputs.path()).len() + 2, a.len()))
}
