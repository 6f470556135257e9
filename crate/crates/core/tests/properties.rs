use std::collections::VecDeque;

use mlcrf_core::densecrf::{build_kernels, map_labels, mean_field, unary_labels, CrfConfig, FilterBackend};
use mlcrf_core::depthfill::fill_missing;
use mlcrf_core::imagedata::{ColorField, DepthField, LabelField};
use mlcrf_core::proposer::{connected_components, propose, Connectivity, ProposerConfig};
use mlcrf_core::unary::{fuse_object_unary, RegionTranslation, UnaryField};
use proptest::prelude::*;

fn arb_mask() -> impl Strategy<Value = LabelField> {
    (1usize..14, 1usize..14, 0.0f64..1.0).prop_flat_map(|(w, h, density)| {
        proptest::collection::vec(proptest::bool::weighted(density), w * h)
            .prop_map(move |bits| LabelField::binary(w, h, bits.into_iter().map(u8::from).collect()).unwrap())
    })
}

/// Breadth-first flood fill, component ids in raster order of first pixels.
fn flood_fill(mask: &LabelField, eight: bool) -> Vec<Option<usize>> {
    let (w, h) = (mask.width() as isize, mask.height() as isize);
    let mut ids = vec![None; (w * h) as usize];
    let mut next = 0;
    for start in 0..(w * h) {
        if mask.data()[start as usize] == 0 || ids[start as usize].is_some() {
            continue;
        }
        ids[start as usize] = Some(next);
        let mut queue = VecDeque::from([start]);
        while let Some(p) = queue.pop_front() {
            let (r, c) = (p / w, p % w);
            for (dr, dc) in [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)] {
                if !eight && dr != 0 && dc != 0 {
                    continue;
                }
                let (nr, nc) = (r + dr, c + dc);
                if nr < 0 || nc < 0 || nr >= h || nc >= w {
                    continue;
                }
                let q = (nr * w + nc) as usize;
                if mask.data()[q] != 0 && ids[q].is_none() {
                    ids[q] = Some(next);
                    queue.push_back(q as isize);
                }
            }
        }
        next += 1;
    }
    ids
}

fn small_config(fraction: f64, n_min: usize, n_max: usize, eight: bool) -> ProposerConfig {
    ProposerConfig {
        extension_fraction: fraction,
        n_min,
        n_max,
        connectivity: if eight { Connectivity::Eight } else { Connectivity::Four },
    }
}

proptest! {
    #[test]
    fn components_match_a_flood_fill(mask in arb_mask(), eight in any::<bool>()) {
        let conn = if eight { Connectivity::Eight } else { Connectivity::Four };
        let map = connected_components(&mask, conn);
        let oracle = flood_fill(&mask, eight);
        prop_assert_eq!(&map.ids, &oracle);
        for comp in &map.components {
            let count = oracle.iter().filter(|&&id| id == Some(comp.id)).count();
            prop_assert_eq!(comp.pixel_count, count);
        }
    }

    #[test]
    fn proposals_are_disjoint_in_bounds_and_cover_their_components(
        mask in arb_mask(),
        fraction in 0.0f64..0.6,
        n_min in 1usize..20,
        span in 1usize..200,
        eight in any::<bool>(),
    ) {
        let cfg = small_config(fraction, n_min, n_min + span, eight);
        let proposals = propose(&mask, &cfg).unwrap();
        let map = connected_components(&mask, cfg.connectivity);
        let mut seen = vec![0usize; map.components.len()];
        for (i, p) in proposals.iter().enumerate() {
            prop_assert!(p.top + p.height <= mask.height() && p.left + p.width <= mask.width());
            prop_assert!((cfg.n_min..=cfg.n_max).contains(&p.area()));
            prop_assert!(p.source_component_ids.windows(2).all(|w| w[0] < w[1]));
            for q in &proposals[i + 1..] {
                prop_assert!(!p.translation().overlaps(&q.translation()));
            }
            for &id in &p.source_component_ids {
                seen[id] += 1;
                let b = map.components[id].bbox;
                prop_assert!(b.top >= p.top && b.left >= p.left);
                prop_assert!(b.bottom < p.top + p.height && b.right < p.left + p.width);
            }
        }
        prop_assert!(seen.iter().all(|&n| n <= 1));
        prop_assert!(proposals.windows(2).all(|w| (w[0].top, w[0].left) <= (w[1].top, w[1].left)));
    }

    #[test]
    fn fusion_replaces_exactly_the_union_of_regions(
        w in 4usize..16,
        h in 4usize..16,
        cuts in (0.1f64..0.9, 0.1f64..0.9),
    ) {
        let scene = UnaryField::new(w, h, 2, (0..w * h * 2).map(|i| i as f64).collect()).unwrap();
        let (cr, cc) = ((h as f64 * cuts.0) as usize, (w as f64 * cuts.1) as usize);
        let cr = cr.clamp(1, h - 1);
        let cc = cc.clamp(1, w - 1);
        let regions: Vec<_> = [(0, 0, cr, cc), (cr, cc, h - cr, w - cc)]
            .into_iter()
            .map(|(r, c, rh, rw)| {
                let t = RegionTranslation { offset_row: r, offset_col: c, region_height: rh, region_width: rw };
                (t, UnaryField::new(rw, rh, 2, vec![0.5; rw * rh * 2]).unwrap())
            })
            .collect();
        let fused = fuse_object_unary(&scene, &regions).unwrap();
        let mut replaced = 0;
        for r in 0..h {
            for c in 0..w {
                let inside = regions.iter().any(|(t, _)| t.contains(r, c));
                if inside {
                    replaced += 1;
                    prop_assert_eq!(fused.pixel(r, c), &[0.5, 0.5][..]);
                } else {
                    prop_assert_eq!(fused.pixel(r, c), scene.pixel(r, c));
                }
            }
        }
        prop_assert_eq!(replaced, cr * cc + (h - cr) * (w - cc));
    }

    #[test]
    fn depth_fill_leaves_no_holes_and_keeps_readings(
        w in 1usize..10,
        h in 1usize..10,
        seed in proptest::collection::vec((0.0f64..5000.0, any::<bool>()), 100),
        window in 1usize..4,
    ) {
        let n = w * h;
        let data: Vec<f64> = seed[..n].iter().map(|(d, hole)| if *hole { 0.0 } else { *d + 1.0 }).collect();
        let depth = DepthField::from_readings(w, h, data.clone()).unwrap();
        if depth.missing_count() == n {
            prop_assert!(fill_missing(&depth, 2 * window + 1).is_err());
            return Ok(());
        }
        let filled = fill_missing(&depth, 2 * window + 1).unwrap();
        prop_assert_eq!(filled.missing_count(), 0);
        let valid: Vec<f64> = data.iter().copied().filter(|&d| d > 0.0).collect();
        let (lo, hi) = valid.iter().fold((f64::MAX, f64::MIN), |(a, b), &d| (a.min(d), b.max(d)));
        for (i, &d) in data.iter().enumerate() {
            if d > 0.0 {
                prop_assert_eq!(filled.data()[i], d);
            } else {
                prop_assert!((lo..=hi).contains(&filled.data()[i]));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn marginals_are_distributions_and_zero_pairwise_is_the_unary(
        w in 2usize..9,
        h in 2usize..9,
        raw in proptest::collection::vec((0u8..=255, 0.01f64..0.99), 64),
        alpha in 0.0f64..3.0,
    ) {
        let n = w * h;
        let color = ColorField::new(w, h, raw[..n].iter().flat_map(|&(c, _)| [c, c / 2, 255 - c]).collect()).unwrap();
        let unary = |shift: f64| {
            let data = raw[..n].iter().flat_map(|&(_, p)| {
                let p = (p + shift).clamp(0.01, 0.99);
                [-(1.0 - p).ln(), -p.ln()]
            });
            UnaryField::new(w, h, 2, data.collect()).unwrap()
        };
        let (coarse, fused) = (unary(0.0), unary(0.1));
        let cfg = CrfConfig { alpha, use_depth: false, ..CrfConfig::mju_waste() };
        let kernels = build_kernels(&color, None, &cfg).unwrap();
        let q = mean_field(&coarse, &fused, &kernels, &cfg, FilterBackend::BruteForce).unwrap();
        for px in q.data().chunks_exact(2) {
            prop_assert!(px.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!((px[0] + px[1] - 1.0).abs() < 1e-9);
        }
        let plain = cfg.without_pairwise();
        let kernels = build_kernels(&color, None, &plain).unwrap();
        let q = mean_field(&coarse, &fused, &kernels, &plain, FilterBackend::BruteForce).unwrap();
        prop_assert_eq!(map_labels(&q), unary_labels(&coarse, &fused, alpha).unwrap());
    }
}
