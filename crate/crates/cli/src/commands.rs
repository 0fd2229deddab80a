use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use relic_core::analysis::{convert_asset, pca_bands, MultispectralStack, Provenance, SCENE_FILE};
use relic_core::geometry::{measure_distance, surface_area, volume_report};
use relic_core::imaging::{
    chroma_key, curtain_composite, edl_apply, ptm_eval, ptm_fit as fit_stack, ptm_parse, ptm_write, render_reference,
    CurtainAxis, EdlConfig, ScmlStack,
};
use relic_core::{CameraPose, MaterialParams, MeshGroup, Metadata, PointLight, Vec3, Viewport};
use relic_server::{AppState, Server, ServerConfig};

use crate::io::{self, sig9};

/// Parses `x,y,z`.
fn parse_vec3(text: &str) -> Result<Vec3> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("{text:?} is not a comma-separated triple"))?;
    ensure!(parts.len() == 3, "{text:?} must have exactly 3 components");
    let v = Vec3::new(parts[0], parts[1], parts[2]);
    ensure!(v.is_finite(), "{text:?} has non-finite components");
    Ok(v)
}

/// Parses `RRGGBB` (optionally `#`-prefixed) into [0, 1] RGB.
fn parse_hex_color(text: &str) -> Result<Vec3> {
    let hex = text.trim_start_matches('#');
    ensure!(
        hex.len() == 6 && hex.bytes().all(|b| b.is_ascii_hexdigit()),
        "{text:?} is not an RRGGBB hex color"
    );
    let channel = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).map(|v| v as f64 / 255.0);
    Ok(Vec3::new(channel(0)?, channel(2)?, channel(4)?))
}

/// Unit light direction; non-unit input is normalized with a warning.
fn unit_light(v: Vec3, what: &str) -> Result<Vec3> {
    let len = v.length();
    ensure!(len > 0.0, "{what} must not be the zero vector");
    if (len - 1.0).abs() > 1e-6 {
        log::warn!("{what} has length {}; normalizing", sig9(len));
        return Ok(v / len);
    }
    Ok(v)
}

fn fmt_vec(v: Vec3) -> String {
    format!("{},{},{}", sig9(v.x), sig9(v.y), sig9(v.z))
}

fn stdout_line(line: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").context("writing to stdout")
}

fn write_png(path: &Path, image: &relic_core::TextureImage) -> Result<()> {
    io::write_atomic(path, &io::encode_png(image)?)
}

pub fn convert(input: &Path, out: &Path, textures: &[String]) -> Result<()> {
    let mesh = io::load_mesh(input)?;
    let mut maps = BTreeMap::new();
    for spec in textures {
        let (role, path) = spec
            .split_once('=')
            .with_context(|| format!("texture {spec:?} must be ROLE=PNG"))?;
        let image = io::load_color(Path::new(path))?;
        ensure!(
            maps.insert(role.to_string(), image).is_none(),
            "texture role {role} given more than once"
        );
    }
    let modified = fs::metadata(input)
        .and_then(|m| m.modified())
        .with_context(|| format!("reading modification time of {}", input.display()))?;
    let timestamp = modified
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let format = input
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_uppercase())
        .unwrap_or_default();
    let mut metadata = Metadata::new();
    if let Some(name) = input.file_name() {
        metadata.insert("source_file".into(), name.to_string_lossy().into_owned().into());
    }
    let doc = convert_asset(
        &MeshGroup::single(mesh),
        &maps,
        &metadata,
        &Provenance::new(format, timestamp),
    )?;
    io::replace_dir(
        out,
        |d| d.join(SCENE_FILE).is_file(),
        |tmp| doc.write_dir(tmp).map_err(Into::into),
    )?;
    let roles: Vec<&str> = maps.keys().map(String::as_str).collect();
    stdout_line(&format!(
        "{}: {} mesh, {} vertices, {} triangles, textures: {}",
        out.display(),
        doc.meshes.len(),
        doc.vertex_count(),
        doc.triangle_count(),
        if roles.is_empty() { "none".to_string() } else { roles.join(",") }
    ))
}

struct ManifestEntry {
    path: PathBuf,
    light: Vec3,
}

fn read_manifest(manifest: &Path) -> Result<Vec<ManifestEntry>> {
    let text = String::from_utf8(io::read(manifest)?).context("manifest is not UTF-8")?;
    let base = manifest.parent().unwrap_or(Path::new(""));
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        ensure!(
            tokens.len() == 4,
            "{}:{}: expected `<path> <lu> <lv> <lw>`",
            manifest.display(),
            i + 1
        );
        let coords = tokens[1..]
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("{}:{}: invalid light direction", manifest.display(), i + 1))?;
        let light = unit_light(
            Vec3::new(coords[0], coords[1], coords[2]),
            &format!("light on manifest line {}", i + 1),
        )?;
        entries.push(ManifestEntry {
            path: base.join(tokens[0]),
            light,
        });
    }
    Ok(entries)
}

pub fn ptm_fit(manifest: &Path, output: &Path) -> Result<()> {
    let entries = read_manifest(manifest)?;
    ensure!(
        entries.len() >= 6,
        "PTM fitting needs N >= 6 images (6 coefficients per pixel); {} lists {}",
        manifest.display(),
        entries.len()
    );
    let images = entries
        .iter()
        .map(|e| io::load_rgb(&e.path))
        .collect::<Result<Vec<_>>>()?;
    let stack = ScmlStack::new(images, entries.iter().map(|e| e.light).collect())?;
    let fit = fit_stack(&stack)?;
    io::write_atomic(output, &ptm_write(&fit.ptm, None)?)?;
    stdout_line(&format!(
        "{}: {}x{} from {} images, residual rms {}",
        output.display(),
        fit.ptm.width(),
        fit.ptm.height(),
        stack.len(),
        sig9(fit.overall_rms)
    ))
}

pub fn ptm_render(ptm_path: &Path, light: &str, output: &Path) -> Result<()> {
    let light = unit_light(parse_vec3(light)?, "--light")?;
    let (ptm, _) = ptm_parse(&io::read(ptm_path)?).with_context(|| format!("parsing {}", ptm_path.display()))?;
    let image = ptm_eval(&ptm, light)?;
    write_png(output, &image)?;
    stdout_line(&format!(
        "{}: {}x{} at light {}",
        output.display(),
        image.width(),
        image.height(),
        fmt_vec(light)
    ))
}

pub enum Measure {
    Distance(String, String),
    Area,
    Volume,
}

pub fn meter(mesh_path: &Path, measure: Measure) -> Result<()> {
    let mesh = io::load_mesh(mesh_path)?;
    match measure {
        Measure::Distance(a, b) => stdout_line(&sig9(measure_distance(parse_vec3(&a)?, parse_vec3(&b)?)?)),
        Measure::Area => stdout_line(&sig9(surface_area(&mesh))),
        Measure::Volume => {
            let report = volume_report(&mesh);
            stdout_line(&sig9(report.volume))?;
            if !report.watertight {
                stdout_line("watertight: false")?;
            }
            Ok(())
        }
    }
}

pub fn shade_edl(color: &Path, depth: &Path, strength: f64, radius: u32, output: &Path) -> Result<()> {
    let color = io::load_color(color)?;
    let depth = io::load_gray(depth)?;
    let out = edl_apply(&color, &depth, strength, radius, &EdlConfig::default())?;
    write_png(output, &out)
}

pub fn shade_chroma(image: &Path, key: &str, replacement: &str, ratio: f64, tolerance: f64, output: &Path) -> Result<()> {
    let key = parse_hex_color(key)?;
    let replacement = parse_hex_color(replacement)?;
    let image = io::load_color(image)?;
    let out = chroma_key(&image, key, replacement, tolerance, ratio)?;
    write_png(output, &out)
}

pub fn shade_curtain(frames: &[PathBuf], pointer: f64, axis: CurtainAxis, output: &Path) -> Result<()> {
    ensure!(
        (0.0..=1.0).contains(&pointer),
        "--pointer {pointer} must lie in [0, 1]"
    );
    let images = frames
        .iter()
        .map(|p| io::load_color(p))
        .collect::<Result<Vec<_>>>()?;
    let out = curtain_composite(&images, (pointer, pointer), axis)?;
    write_png(output, &out)
}

pub fn pca(bands: &[PathBuf], components: Option<usize>, out: &Path) -> Result<()> {
    let images = bands
        .iter()
        .map(|p| io::load_gray(p))
        .collect::<Result<Vec<_>>>()?;
    let labels = bands
        .iter()
        .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    let stack = MultispectralStack::new(images, labels)?;
    let k = components.unwrap_or(stack.band_count());
    let result = pca_bands(&stack, k)?;
    let summary = serde_json::json!({
        "labels": stack.labels(),
        "mean": result.mean,
        "components": result.components,
        "eigenvalues": result.eigenvalues,
        "explained_variance": result.explained_variance,
        "rescale": result.rescale,
    });
    let pngs = result
        .textures
        .iter()
        .map(io::encode_png16)
        .collect::<Result<Vec<_>>>()?;
    io::replace_dir(
        out,
        |d| d.join("pca.json").is_file(),
        |tmp| {
            fs::create_dir_all(tmp)?;
            for (i, png) in pngs.iter().enumerate() {
                fs::write(tmp.join(format!("pc{}.png", i + 1)), png)?;
            }
            let mut json = serde_json::to_vec_pretty(&summary)?;
            json.push(b'\n');
            fs::write(tmp.join("pca.json"), json)?;
            Ok(())
        },
    )?;
    for i in 0..k {
        stdout_line(&format!(
            "pc{}: eigenvalue {} explained {}",
            i + 1,
            sig9(result.eigenvalues[i]),
            sig9(result.explained_variance[i])
        ))?;
    }
    Ok(())
}

pub struct RenderJob {
    pub mesh: PathBuf,
    pub width: u32,
    pub height: u32,
    pub lights: Vec<String>,
    pub color: String,
    pub metalness: f64,
    pub roughness: f64,
    pub output: PathBuf,
    pub depth: Option<PathBuf>,
}

/// Camera in front of (+Z), slightly above and right of the bounding-box
/// center, framing the whole mesh.
fn framing_camera(lo: Vec3, hi: Vec3, aspect: f64) -> CameraPose {
    const FOV_Y: f64 = 40.0;
    let center = (lo + hi) * 0.5;
    let radius = ((hi - lo).length() * 0.5).max(1e-6);
    let half = (FOV_Y.to_radians() * 0.5).tan().min((FOV_Y.to_radians() * 0.5).tan() * aspect);
    let dist = radius / half.atan().sin() * 1.05;
    let eye = center + Vec3::new(0.4, 0.3, 1.0).normalize_or_zero() * dist;
    CameraPose::look_at(eye, center, Vec3::Y, FOV_Y, (dist - radius * 1.5).max(dist * 1e-3), dist + radius * 2.0)
}

pub fn render(job: &RenderJob) -> Result<()> {
    let mesh = io::load_mesh(&job.mesh)?;
    let base_color = parse_hex_color(&job.color)?;
    let viewport = Viewport::new(job.width, job.height);
    viewport.validate()?;
    let (lo, hi) = mesh.bounds().context("mesh has no vertices")?;
    let camera = framing_camera(lo, hi, viewport.aspect());
    let lights = if job.lights.is_empty() {
        vec![PointLight {
            position: camera.position,
            color: Vec3::splat(1.0),
            intensity: 1.0,
        }]
    } else {
        job.lights
            .iter()
            .map(|l| {
                Ok(PointLight {
                    position: parse_vec3(l)?,
                    color: Vec3::splat(1.0),
                    intensity: 1.0,
                })
            })
            .collect::<Result<Vec<_>>>()?
    };
    let material = MaterialParams {
        base_color,
        metalness: job.metalness,
        roughness: job.roughness,
        ..MaterialParams::default()
    };
    ensure!(
        (0.0..=1.0).contains(&job.metalness) && (0.0..=1.0).contains(&job.roughness),
        "--metalness and --roughness must lie in [0, 1]"
    );
    let triangles = mesh.triangle_count();
    let rendered = render_reference(&MeshGroup::single(mesh), &camera, &lights, &material, viewport)?;
    let color_png = io::encode_png(&rendered.color)?;
    let depth_png = job.depth.as_ref().map(|_| io::encode_png16(&rendered.depth)).transpose()?;
    io::write_atomic(&job.output, &color_png)?;
    if let (Some(path), Some(png)) = (&job.depth, depth_png) {
        io::write_atomic(path, &png)?;
    }
    stdout_line(&format!(
        "{}: {}x{}, {} triangles",
        job.output.display(),
        job.width,
        job.height,
        triangles
    ))
}

async fn termination() {
    #[cfg(unix)]
    {
        use tokio::signal::unix::{signal, SignalKind};
        match signal(SignalKind::terminate()) {
            Ok(mut term) => {
                tokio::select! {
                    _ = term.recv() => {}
                    _ = tokio::signal::ctrl_c() => {}
                }
            }
            Err(e) => {
                log::warn!("cannot listen for SIGTERM: {e}");
                let _ = tokio::signal::ctrl_c().await;
            }
        }
    }
    #[cfg(not(unix))]
    {
        let _ = tokio::signal::ctrl_c().await;
    }
}

pub fn serve(config: ServerConfig) -> Result<()> {
    let runtime = tokio::runtime::Runtime::new().context("starting the async runtime")?;
    runtime.block_on(async {
        let server = Server::bind(config).await?;
        stdout_line(&format!("listening on {}", server.local_addr()))?;
        server.run(termination()).await?;
        Ok(())
    })
}

pub fn audit(data_dir: &Path) -> Result<()> {
    if !data_dir.is_dir() {
        bail!("{} is not a directory", data_dir.display());
    }
    let state = AppState::open(ServerConfig {
        data_dir: Some(data_dir.to_path_buf()),
        ..ServerConfig::default()
    })?;
    let report = state.audit()?;
    stdout_line(&format!("assets: {}", report.assets))?;
    for id in &report.missing {
        stdout_line(&format!("missing: {id}"))?;
    }
    for id in &report.corrupt {
        stdout_line(&format!("corrupt: {id}"))?;
    }
    ensure!(report.ok, "audit found damaged assets");
    Ok(())
}
