use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{rngs::StdRng, Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use relic_core::analysis::{
    convert_asset, pca_bands, Asset, ComposedTool, MultispectralStack, PcaResult, Provenance, SceneDocument,
    ToolRegistry,
};
use relic_core::geometry::{shapes, MeshGroup};
use relic_core::{Metadata, TextureImage};

fn stack_from(bands: Vec<Vec<f32>>, w: u32, h: u32) -> MultispectralStack {
    let labels = (0..bands.len()).map(|i| format!("band{i}")).collect();
    let images = bands.into_iter().map(|d| TextureImage::new(w, h, 1, d).unwrap()).collect();
    MultispectralStack::new(images, labels).unwrap()
}

fn random_stack(seed: u64, n: usize, w: u32, h: u32) -> MultispectralStack {
    let mut rng = StdRng::seed_from_u64(seed);
    // Correlated bands: random mixtures of a few latent images.
    let latent: Vec<Vec<f32>> = (0..3).map(|_| (0..w * h).map(|_| rng.random::<f32>()).collect()).collect();
    let bands = (0..n)
        .map(|_| {
            let mix: [f32; 3] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            (0..(w * h) as usize)
                .map(|p| mix[0] * latent[0][p] + mix[1] * latent[1][p] + mix[2] * latent[2][p] + 0.05 * rng.random::<f32>())
                .collect()
        })
        .collect();
    stack_from(bands, w, h)
}

fn centered_oracle(stack: &MultispectralStack) -> DMatrix<f64> {
    let n = stack.band_count();
    let p = stack.bands()[0].pixel_count();
    let x = DMatrix::from_fn(p, n, |i, b| stack.bands()[b].data()[i] as f64);
    let mean = x.row_mean();
    DMatrix::from_fn(p, n, |i, b| x[(i, b)] - mean[b])
}

fn covariance_oracle(stack: &MultispectralStack) -> DMatrix<f64> {
    let centered = centered_oracle(stack);
    centered.transpose() * &centered / centered.nrows() as f64
}

fn reconstruction_error(stack: &MultispectralStack, r: &PcaResult, k: usize) -> f64 {
    let p = stack.bands()[0].pixel_count();
    (0..p)
        .map(|i| {
            let x = stack.sample(i);
            let mut rec = r.mean.clone();
            for c in 0..k {
                let t = r.project(&x, c);
                rec.iter_mut().zip(&r.components[c]).for_each(|(v, e)| *v += t * e);
            }
            x.iter().zip(&rec).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        })
        .sum()
}

#[test]
fn rank_one_stack_is_explained_by_first_component() {
    let mut rng = StdRng::seed_from_u64(99);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let b1: Vec<f32> = (0..64 * 64).map(|_| rng.random::<f32>()).collect();
    let b2: Vec<f32> = b1.iter().map(|v| 2.0 * v + noise.sample(&mut rng) as f32).collect();
    let r = pca_bands(&stack_from(vec![b1, b2], 64, 64), 2).unwrap();
    assert!(r.explained_variance[0] >= 0.99, "{:?}", r.explained_variance);
    // Direction ≈ (1, 2)/√5.
    let c = &r.components[0];
    assert!((c[0] - 1.0 / 5f64.sqrt()).abs() < 1e-3 && (c[1] - 2.0 / 5f64.sqrt()).abs() < 1e-3);
}

#[test]
fn conversion_is_a_fixed_point_on_the_gallery() {
    let prov = Provenance::new("OBJ", 1_650_000_000);
    let textures = BTreeMap::from([(
        "diffuse".to_string(),
        TextureImage::from_fn(8, 8, 3, |x, y| vec![x as f32 / 8.0, y as f32 / 8.0, 0.25]).unwrap(),
    )]);
    let gallery = shapes::gallery();
    assert_eq!(gallery.len(), 10);
    for group in gallery {
        let first = convert_asset(&group, &textures, &Metadata::new(), &prov).unwrap();
        let dir = tempfile::tempdir().unwrap();
        first.write_dir(dir.path()).unwrap();
        let parsed = SceneDocument::read_dir(dir.path()).unwrap();
        let second = convert_asset(
            &parsed.to_group().unwrap(),
            &parsed.textures_by_role(),
            &Metadata::new(),
            &Provenance::new("scene", 1_900_000_000),
        )
        .unwrap();
        assert_eq!(second, first, "{}", group.meshes()[0].name());
        assert_eq!(second.to_parts().unwrap(), first.to_parts().unwrap());
    }
}

#[test]
fn concurrent_runs_leave_inputs_untouched() {
    let reg = Arc::new(ToolRegistry::with_builtins());
    reg.register(Arc::new(ComposedTool::new(
        "center+normals",
        vec![reg.get("center").unwrap(), reg.get("normals").unwrap()],
    )))
    .unwrap();
    let inputs: Vec<Asset> = shapes::gallery().into_iter().map(Asset::Group).collect();
    let snapshots: Vec<String> = inputs
        .iter()
        .map(|a| match a {
            Asset::Group(g) => serde_json::to_string(g).unwrap(),
            Asset::Mesh(m) => serde_json::to_string(m).unwrap(),
        })
        .collect();
    std::thread::scope(|s| {
        for id in ["identity", "center", "normals", "center+normals"] {
            let reg = reg.clone();
            let inputs = &inputs;
            s.spawn(move || {
                let tasks: Vec<_> = inputs.iter().map(|a| reg.run_tool(id, a).unwrap()).collect();
                for (t, input) in tasks.into_iter().zip(inputs) {
                    let out = t.wait().unwrap();
                    assert_eq!(out.kind(), input.kind());
                }
            });
        }
    });
    for (a, snap) in inputs.iter().zip(&snapshots) {
        let Asset::Group(g) = a else { unreachable!() };
        assert_eq!(&serde_json::to_string(g).unwrap(), snap);
    }
}

#[test]
fn tool_tasks_are_awaitable() {
    let reg = ToolRegistry::with_builtins();
    let input = Asset::Group(MeshGroup::single(shapes::unit_cube()));
    let out = futures::executor::block_on(reg.run_tool("identity", &input).unwrap()).unwrap();
    assert_eq!(out, input);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pca_matches_svd_oracle(seed in any::<u64>(), n in 2usize..7) {
        // Right singular vectors of the centered data are the components;
        // squared singular values over the pixel count are the eigenvalues.
        let stack = random_stack(seed, n, 17, 13);
        let r = pca_bands(&stack, n).unwrap();
        let centered = centered_oracle(&stack);
        let p = centered.nrows() as f64;
        let svd = centered.svd(false, true);
        let vt = svd.v_t.unwrap();
        let values: Vec<f64> = svd.singular_values.iter().map(|s| s * s / p).collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        let top = values[order[0]].max(1e-300);
        let cov = covariance_oracle(&stack);
        for (k, &o) in order.iter().enumerate() {
            prop_assert!((r.eigenvalues[k] - values[o]).abs() <= 1e-9 * top);
            let v = DVector::from_column_slice(&r.components[k]);
            prop_assert!((&cov * &v - &v * r.eigenvalues[k]).norm() <= 1e-9 * top);
            let gap = order.iter().filter(|&&j| j != o)
                .map(|&j| (values[j] - values[o]).abs())
                .fold(f64::INFINITY, f64::min);
            if gap > 1e-6 * top {
                let dot: f64 = (0..n).map(|b| r.components[k][b] * vt[(o, b)]).sum();
                prop_assert!((dot.abs() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn components_are_orthonormal_and_ratios_sum_to_one(seed in any::<u64>(), n in 2usize..9) {
        let stack = random_stack(seed, n, 11, 9);
        let r = pca_bands(&stack, n).unwrap();
        for i in 0..n {
            for j in 0..n {
                let g: f64 = r.components[i].iter().zip(&r.components[j]).map(|(a, b)| a * b).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                prop_assert!((g - expect).abs() <= 1e-9);
            }
        }
        prop_assert!((r.explained_variance.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        for w in r.explained_variance.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn reconstruction_error_is_monotone_in_k(seed in any::<u64>(), n in 2usize..6) {
        let stack = random_stack(seed, n, 9, 7);
        let r = pca_bands(&stack, n).unwrap();
        let errors: Vec<f64> = (0..=n).map(|k| reconstruction_error(&stack, &r, k)).collect();
        let scale = errors[0].max(1e-300);
        for w in errors.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9 * scale);
        }
        prop_assert!(errors[n] <= 1e-9 * scale);
    }

    #[test]
    fn textures_are_unit_range_with_recorded_affine(seed in any::<u64>(), k in 1usize..4) {
        let stack = random_stack(seed, 4, 8, 8);
        let r = pca_bands(&stack, k).unwrap();
        for c in 0..k {
            for (i, t) in r.textures[c].data().iter().enumerate() {
                prop_assert!((0.0..=1.0).contains(t));
                let raw = r.project(&stack.sample(i), c);
                prop_assert!((r.rescale[c].apply(raw) - *t as f64).abs() < 1e-6);
            }
        }
    }
}
