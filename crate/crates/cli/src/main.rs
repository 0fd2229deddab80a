//! `relic`: batch front end for conversion, relighting, shading, metering,
//! PCA, rendering and the collaboration server.

mod commands;
mod io;

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "relic", version, about = "Artifact conversion, relighting, analysis and sharing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert an OBJ or PLY mesh (plus textures) into a scene directory.
    Convert {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Texture binding as ROLE=PNG (diffuse, normal, displacement,
        /// roughness, metalness). Repeatable.
        #[arg(long = "texture", value_name = "ROLE=PNG")]
        textures: Vec<String>,
    },
    /// Fit or render polynomial texture maps.
    Ptm {
        #[command(subcommand)]
        command: PtmCommand,
    },
    /// Measure a mesh.
    Meter(MeterArgs),
    /// Apply an image-space shading operator.
    Shade {
        #[command(subcommand)]
        command: ShadeCommand,
    },
    /// Principal components of single-channel band images.
    Pca {
        #[arg(required = true, num_args = 2..)]
        bands: Vec<PathBuf>,
        /// Number of components to keep (default: all).
        #[arg(long)]
        components: Option<usize>,
        /// Directory for pcN.png and pca.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Rasterize a mesh with the reference shading model.
    Render(RenderArgs),
    /// Run the collaboration server until SIGTERM or Ctrl-C.
    Serve(ServeArgs),
    /// Check that every stored asset has an intact blob.
    Audit {
        #[arg(long, env = "RELIC_DATA_DIR")]
        data_dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum PtmCommand {
    /// Fit a PTM from a manifest of `<path> <lu> <lv> <lw>` lines.
    Fit {
        manifest: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Evaluate a PTM under one light direction.
    Render {
        ptm: PathBuf,
        /// Light direction lu,lv,lw; normalized if not unit length.
        #[arg(long, allow_hyphen_values = true)]
        light: String,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args)]
#[group(skip)]
#[command(group = ArgGroup::new("measure").required(true).multiple(false))]
struct MeterArgs {
    mesh: PathBuf,
    /// Distance between two points given as x,y,z.
    #[arg(long, num_args = 2, value_names = ["P1", "P2"], allow_hyphen_values = true, group = "measure")]
    distance: Option<Vec<String>>,
    #[arg(long, group = "measure")]
    area: bool,
    #[arg(long, group = "measure")]
    volume: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Horizontal,
    Vertical,
}

#[derive(Subcommand)]
enum ShadeCommand {
    /// Eye-dome lighting from a color image and a grayscale depth image.
    Edl {
        color: PathBuf,
        depth: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        strength: f64,
        #[arg(long, default_value_t = 1)]
        radius: u32,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Replace colors near a key color.
    Chroma {
        image: PathBuf,
        /// Key color as RRGGBB hex.
        #[arg(long)]
        key: String,
        /// Replacement color as RRGGBB hex.
        #[arg(long)]
        replacement: String,
        #[arg(long, default_value_t = 1.0)]
        ratio: f64,
        /// Euclidean RGB distance in [0, 1] units.
        #[arg(long, default_value_t = 0.0)]
        tolerance: f64,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Side-by-side comparison of two or more frames split at a pointer.
    Curtain {
        #[arg(required = true, num_args = 2..)]
        frames: Vec<PathBuf>,
        /// Normalized pointer position along the axis.
        #[arg(long, default_value_t = 0.5)]
        pointer: f64,
        #[arg(long, value_enum, default_value_t = Axis::Horizontal)]
        axis: Axis,
        #[arg(short, long)]
        output: PathBuf,
    },
}

#[derive(Args)]
struct RenderArgs {
    mesh: PathBuf,
    #[arg(long, default_value_t = 256)]
    width: u32,
    #[arg(long, default_value_t = 256)]
    height: u32,
    /// Point light position x,y,z (repeatable); defaults to the camera.
    #[arg(long = "light", allow_hyphen_values = true)]
    lights: Vec<String>,
    /// Base color as RRGGBB hex.
    #[arg(long, default_value = "FFFFFF")]
    color: String,
    #[arg(long, default_value_t = 0.0)]
    metalness: f64,
    #[arg(long, default_value_t = 0.5)]
    roughness: f64,
    #[arg(short, long)]
    output: PathBuf,
    /// Optional 16-bit depth image.
    #[arg(long)]
    depth: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "RELIC_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    /// Persistent storage root; in-memory when omitted.
    #[arg(long, env = "RELIC_DATA_DIR")]
    data_dir: Option<PathBuf>,
    #[arg(long, env = "RELIC_MAX_BLOB_SIZE", default_value_t = relic_server::DEFAULT_MAX_BLOB_SIZE)]
    max_blob_size: u64,
    /// Disable gzip storage and response negotiation.
    #[arg(long, env = "RELIC_NO_COMPRESSION")]
    no_compression: bool,
}

fn main() {
    let cli = Cli::parse();
    let default_level = if matches!(cli.command, Command::Serve(_)) { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level))
        .format_timestamp(None)
        .init();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Convert { input, out, textures } => commands::convert(&input, &out, &textures),
        Command::Ptm { command } => match command {
            PtmCommand::Fit { manifest, output } => commands::ptm_fit(&manifest, &output),
            PtmCommand::Render { ptm, light, output } => commands::ptm_render(&ptm, &light, &output),
        },
        Command::Meter(m) => {
            let measure = match (m.distance, m.area, m.volume) {
                (Some(p), _, _) => commands::Measure::Distance(p[0].clone(), p[1].clone()),
                (None, true, _) => commands::Measure::Area,
                _ => commands::Measure::Volume,
            };
            commands::meter(&m.mesh, measure)
        }
        Command::Shade { command } => match command {
            ShadeCommand::Edl {
                color,
                depth,
                strength,
                radius,
                output,
            } => commands::shade_edl(&color, &depth, strength, radius, &output),
            ShadeCommand::Chroma {
                image,
                key,
                replacement,
                ratio,
                tolerance,
                output,
            } => commands::shade_chroma(&image, &key, &replacement, ratio, tolerance, &output),
            ShadeCommand::Curtain {
                frames,
                pointer,
                axis,
                output,
            } => {
                let axis = match axis {
                    Axis::Horizontal => relic_core::imaging::CurtainAxis::Horizontal,
                    Axis::Vertical => relic_core::imaging::CurtainAxis::Vertical,
                };
                commands::shade_curtain(&frames, pointer, axis, &output)
            }
        },
        Command::Pca { bands, components, out } => commands::pca(&bands, components, &out),
        Command::Render(r) => commands::render(&commands::RenderJob {
            mesh: r.mesh,
            width: r.width,
            height: r.height,
            lights: r.lights,
            color: r.color,
            metalness: r.metalness,
            roughness: r.roughness,
            output: r.output,
            depth: r.depth,
        }),
        Command::Serve(s) => commands::serve(relic_server::ServerConfig {
            listen: s.listen,
            data_dir: s.data_dir,
            max_blob_size: s.max_blob_size,
            compression: !s.no_compression,
        }),
        Command::Audit { data_dir } => commands::audit(&data_dir),
    }
}
