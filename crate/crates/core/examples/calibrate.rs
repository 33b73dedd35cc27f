//! Scratch harness for sizing the trained-model acceptance fixture:
//! times training and reports round-trip, benchmark, and transfer
//! quality for a hyperparameter choice given via env vars.

use cadenza::condition::{synthesize_captions, CaptionBank, ToyTextEncoder};
use cadenza::denoiser::{train_toy_denoiser, DenoiserConfig, TrainConfig};
use cadenza::editor::{reconstruct_and_record, EditRequest, DEFAULT_ALPHA};
use cadenza::inversion::{edit_real, invert, InversionConfig};
use cadenza::metrics::{chroma_similarity, chromagram};
use cadenza::schedule::{LatentClip, ScheduleSpec};
use cadenza::toybench::{
    attribute_probe, build_dataset, from_model_space, generate_clip, run_benchmark,
    to_model_space, AttributeSpace, Attributes, BenchmarkConfig, EditPair, ToyCaptioner,
};
use cadenza::condition::{compute_delta, TextEncoder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn env_usize(key: &str, default: usize) -> usize {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn env_f64(key: &str, default: f64) -> f64 {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() {
    let clips = env_usize("CAL_CLIPS", 96);
    let epochs = env_usize("CAL_EPOCHS", 60);
    let batch = env_usize("CAL_BATCH", 8);
    let lr = env_f64("CAL_LR", 2e-3);
    let steps = env_usize("CAL_STEPS", 50);
    let bench_seeds = env_usize("CAL_BENCH_SEEDS", 0);
    let transfer_seeds = env_usize("CAL_TRANSFER_SEEDS", 0);
    let roundtrip_clips = env_usize("CAL_ROUNDTRIP", 10);

    let space = AttributeSpace::default_space();
    let dataset = build_dataset(&space, clips, 7).unwrap();
    let spec = ScheduleSpec {
        num_inference_steps: steps,
        ..ScheduleSpec::default()
    };
    let schedule = spec.build().unwrap();
    let encoder = ToyTextEncoder::with_default_config();
    let train = TrainConfig {
        epochs,
        batch_size: batch,
        learning_rate: lr,
        ..TrainConfig::default()
    };

    let cache = std::env::var("CAL_CKPT").ok();
    let denoiser = match cache.as_deref().filter(|p| std::path::Path::new(p).exists()) {
        Some(path) => {
            let (d, meta) = cadenza::container::load_checkpoint(path.as_ref()).unwrap();
            println!("loaded cached checkpoint {path} ({} epochs)", meta.loss_curve.len());
            d
        }
        None => {
            let t0 = Instant::now();
            let run = train_toy_denoiser(
                &dataset,
                &schedule,
                DenoiserConfig::default(),
                &encoder,
                &train,
            )
            .unwrap();
            let train_secs = t0.elapsed().as_secs_f64();
            let curve = &run.loss_curve;
            println!(
                "train: {clips} clips, {epochs} epochs, batch {batch}, lr {lr}: {train_secs:.1}s ({:.2}s/epoch)",
                train_secs / epochs as f64
            );
            for (i, l) in curve.iter().enumerate() {
                if i % 5 == 0 || i + 1 == curve.len() {
                    println!("  epoch {i:3}: loss {l:.5}");
                }
            }
            if let Some(path) = cache.as_deref() {
                let meta = cadenza::container::CheckpointMeta {
                    denoiser: run.denoiser.config().clone(),
                    encoder: encoder.config().clone(),
                    schedule: spec.clone(),
                    loss_curve: curve.clone(),
                };
                cadenza::container::save_checkpoint(path.as_ref(), &run.denoiser, &meta).unwrap();
                println!("cached checkpoint at {path}");
            }
            run.denoiser
        }
    };

    // criterion 3 shape: invert a dataset clip and sample back
    if roundtrip_clips > 0 {
        let t0 = Instant::now();
        let config = InversionConfig {
            num_inference_steps: steps,
            ..InversionConfig::default()
        };
        let mut sims = Vec::new();
        for clip in dataset.clips.iter().take(roundtrip_clips) {
            let z0 = LatentClip::toy(to_model_space(&clip.spectrogram));
            let (z_t, _) =
                invert(&z0, &clip.prompt, &config, &denoiser, &schedule, &encoder).unwrap();
            let e = encoder.encode(&clip.prompt).unwrap();
            let (recon, _) =
                reconstruct_and_record(&z_t, &e, &schedule, &denoiser, 1.0, None).unwrap();
            let a = chromagram(&LatentClip::toy(clip.spectrogram.clone())).unwrap();
            let b = chromagram(&recon.with_data(from_model_space(&recon.data))).unwrap();
            sims.push(chroma_similarity(&a, &b).unwrap());
        }
        let mean = sims.iter().sum::<f64>() / sims.len() as f64;
        let min = sims.iter().cloned().fold(f64::INFINITY, f64::min);
        println!(
            "roundtrip ({} clips, {} steps): mean chroma {mean:.4}, min {min:.4} [{:.1}s]",
            sims.len(),
            steps,
            t0.elapsed().as_secs_f64()
        );
    }

    // which attributes do fresh generations express, and at what
    // guidance?
    let gen_probe = env_usize("CAL_GEN_PROBE", 0);
    if gen_probe > 0 {
        for w in [1.0, env_f64("CAL_GUIDANCE", 3.0)] {
            let t0 = Instant::now();
            let uncond = encoder.empty();
            let (mut mood_ok, mut genre_ok, mut timbre_ok, mut all_ok, mut silent) =
                (0, 0, 0, 0, 0);
            for s in 0..gen_probe {
                let mut rng = ChaCha8Rng::seed_from_u64(0xD1CE + s as u64);
                let attrs = Attributes::new(
                    space.moods[rng.gen_range(0..space.moods.len())].0.clone(),
                    space.genres[rng.gen_range(0..space.genres.len())].0.clone(),
                    space.timbres[rng.gen_range(0..space.timbres.len())].0.clone(),
                );
                let e = encoder.encode(&attrs.prompt()).unwrap();
                let shape = denoiser.config().latent_shape();
                let z = LatentClip::toy(ndarray::Array3::from_shape_fn(shape, |_| {
                    rand::Rng::sample(&mut rng, rand_distr::StandardNormal)
                }));
                let (clip, _) =
                    reconstruct_and_record(&z, &e, &schedule, &denoiser, w, Some(&uncond))
                        .unwrap();
                let probe = attribute_probe(&from_model_space(&clip.data), &space).unwrap();
                if probe.silence {
                    silent += 1;
                }
                if probe.mood == attrs.mood {
                    mood_ok += 1;
                }
                if probe.genre == attrs.genre {
                    genre_ok += 1;
                }
                if probe.timbre == attrs.timbre {
                    timbre_ok += 1;
                }
                if probe.matches(&attrs) {
                    all_ok += 1;
                }
            }
            println!(
                "gen probe w={w}: mood {mood_ok}/{gen_probe} genre {genre_ok}/{gen_probe} timbre {timbre_ok}/{gen_probe} all {all_ok}/{gen_probe} silent {silent} [{:.1}s]",
                t0.elapsed().as_secs_f64()
            );
        }
    }

    // where the conditional signal lands: prediction sensitivity to
    // single-attribute prompt swaps, and the timbre confusion plus
    // measured overtone ratios of fresh generations
    let diag = env_usize("CAL_DIAG", 0);
    if diag > 0 {
        let base = Attributes::new("upbeat", "classical", "timbreA");
        let variants = [
            ("mood  ", Attributes::new("peaceful", "classical", "timbreA")),
            ("genre ", Attributes::new("upbeat", "rock", "timbreA")),
            ("timbre", Attributes::new("upbeat", "classical", "timbreB")),
        ];
        let e_base = encoder.encode(&base.prompt()).unwrap();
        let shape = denoiser.config().latent_shape();
        let mut rng = ChaCha8Rng::seed_from_u64(0xD1A6);
        let probes: Vec<(ndarray::Array3<f64>, usize)> = (0..diag)
            .map(|_| {
                let z = ndarray::Array3::from_shape_fn(shape, |_| {
                    rand::Rng::sample(&mut rng, rand_distr::StandardNormal)
                });
                let t = rng.gen_range(1..=schedule.num_train_steps());
                (z, t)
            })
            .collect();
        for (name, attrs) in &variants {
            let e_var = encoder.encode(&attrs.prompt()).unwrap();
            let mut rel = 0.0;
            for (z, t) in &probes {
                let (eb, _) = denoiser.predict_noise(z, *t, &e_base, false).unwrap();
                let (ev, _) = denoiser.predict_noise(z, *t, &e_var, false).unwrap();
                let diff = (&eb - &ev).mapv(|v| v * v).sum().sqrt();
                let norm = eb.mapv(|v| v * v).sum().sqrt();
                rel += diff / norm;
            }
            println!("eps sensitivity {name}: {:.4}", rel / probes.len() as f64);
        }

        let uncond = encoder.empty();
        let w = env_f64("CAL_GUIDANCE", 3.0);
        for (ti, (tname, _)) in space.timbres.iter().enumerate() {
            let mut confusion = vec![0usize; space.timbres.len() + 1];
            let mut ratio_sum = [0.0f64; 2];
            for s in 0..diag {
                let mut rng = ChaCha8Rng::seed_from_u64(0xC0FE + (ti * diag + s) as u64);
                let attrs = Attributes::new(
                    space.moods[rng.gen_range(0..space.moods.len())].0.clone(),
                    space.genres[rng.gen_range(0..space.genres.len())].0.clone(),
                    tname.clone(),
                );
                let e = encoder.encode(&attrs.prompt()).unwrap();
                let z = LatentClip::toy(ndarray::Array3::from_shape_fn(shape, |_| {
                    rand::Rng::sample(&mut rng, rand_distr::StandardNormal)
                }));
                let (clip, _) =
                    reconstruct_and_record(&z, &e, &schedule, &denoiser, w, Some(&uncond))
                        .unwrap();
                let spec = from_model_space(&clip.data);
                let probe = attribute_probe(&spec, &space).unwrap();
                let slot = if probe.silence {
                    space.timbres.len()
                } else {
                    space
                        .timbres
                        .iter()
                        .position(|(n, _)| *n == probe.timbre)
                        .unwrap()
                };
                confusion[slot] += 1;
                // overtone-to-fundamental ratios at the detected melody
                let clamped = spec.mapv(|v| v.max(0.0));
                let (mut e_fund, mut e_o) = (0.0, [0.0f64; 2]);
                for f in 0..cadenza::toybench::FRAMES {
                    let m = probe.melody[f / cadenza::toybench::SEGMENT_FRAMES];
                    e_fund += clamped[[0, m, f]];
                    for h in 0..2 {
                        e_o[h] += clamped[[0, m + 8 * (h + 1), f]];
                    }
                }
                for h in 0..2 {
                    ratio_sum[h] += e_o[h] / e_fund.max(1e-12);
                }
            }
            println!(
                "gen w={w} prompt {tname}: confusion {confusion:?} mean ratios [{:.3}, {:.3}]",
                ratio_sum[0] / diag as f64,
                ratio_sum[1] / diag as f64
            );
        }
    }

    // dump one generated spectrogram next to its ideal rendering
    if env_usize("CAL_DUMP", 0) > 0 {
        let attrs = Attributes::new("upbeat", "classical", "timbreB");
        let e = encoder.encode(&attrs.prompt()).unwrap();
        let uncond = encoder.empty();
        let w = env_f64("CAL_GUIDANCE", 3.0);
        let shape = denoiser.config().latent_shape();
        let mut rng = ChaCha8Rng::seed_from_u64(0xD0);
        let z = LatentClip::toy(ndarray::Array3::from_shape_fn(shape, |_| {
            rand::Rng::sample(&mut rng, rand_distr::StandardNormal)
        }));
        let (clip, _) =
            reconstruct_and_record(&z, &e, &schedule, &denoiser, w, Some(&uncond)).unwrap();
        let spec = from_model_space(&clip.data);
        println!("generated {:?} at w={w} (rows = bins, top row = bin 31):", attrs.prompt());
        for b in (0..cadenza::toybench::BINS).rev() {
            let row: String = (0..cadenza::toybench::FRAMES)
                .map(|f| {
                    let v = spec[[0, b, f]];
                    if v < 0.05 { " .".into() } else { format!("{:2.0}", (v * 9.0).min(9.0)) }
                })
                .collect::<Vec<_>>()
                .join(" ");
            println!("{b:2} {row}");
        }
    }

    // criterion 8 shape: generated-path and inversion-path transfer
    if transfer_seeds > 0 {
        let bank = CaptionBank::default_bank();
        let src_caps = synthesize_captions("timbreA", &bank, 12, 0xCA9).unwrap();
        let tgt_caps = synthesize_captions("timbreB", &bank, 12, 0xCA9).unwrap();
        let direction =
            compute_delta(&src_caps, &tgt_caps, "timbreA", "timbreB", &encoder).unwrap();

        let t0 = Instant::now();
        let mut gen_hits = 0;
        let mut gen_chroma_ok = 0;
        let mut gen_probe_ok = 0;
        for s in 0..transfer_seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(0xFACE + s as u64);
            let attrs = Attributes::new(
                space.moods[rng.gen_range(0..space.moods.len())].0.clone(),
                space.genres[rng.gen_range(0..space.genres.len())].0.clone(),
                "timbreA",
            );
            let target_prompt = attrs.prompt().replace("timbreA", "timbreB");
            let mut request = EditRequest::new(
                attrs.prompt(),
                target_prompt,
                direction.clone(),
                s as u64,
                steps,
            );
            request.alpha = DEFAULT_ALPHA;
            let (original, edited, _) =
                cadenza::editor::edit(&request, &denoiser, &schedule, &encoder).unwrap();
            let probe = attribute_probe(&from_model_space(&edited.data), &space).unwrap();
            let a = chromagram(&original.with_data(from_model_space(&original.data))).unwrap();
            let b = chromagram(&edited.with_data(from_model_space(&edited.data))).unwrap();
            let sim = chroma_similarity(&a, &b).unwrap();
            let probe_hit = !probe.silence && probe.timbre == "timbreB";
            if probe_hit {
                gen_probe_ok += 1;
            }
            if sim >= 0.8 {
                gen_chroma_ok += 1;
            }
            if probe_hit && sim >= 0.8 {
                gen_hits += 1;
            }
        }
        println!(
            "transfer generated: {}/{} (probe {}, chroma {}) [{:.1}s]",
            gen_hits,
            transfer_seeds,
            gen_probe_ok,
            gen_chroma_ok,
            t0.elapsed().as_secs_f64()
        );

        let t0 = Instant::now();
        let captioner = ToyCaptioner::new(space.clone());
        let config = InversionConfig {
            num_inference_steps: steps,
            ..InversionConfig::default()
        };
        let mut inv_hits = 0;
        let mut inv_probe_ok = 0;
        let mut inv_chroma_ok = 0;
        for s in 0..transfer_seeds {
            let mut rng = ChaCha8Rng::seed_from_u64(0xBEEF + s as u64);
            let attrs = Attributes::new(
                space.moods[rng.gen_range(0..space.moods.len())].0.clone(),
                space.genres[rng.gen_range(0..space.genres.len())].0.clone(),
                "timbreA",
            );
            let (spec, _) = generate_clip(&attrs, 0x1000 + s as u64, &space).unwrap();
            let clip = LatentClip::toy(to_model_space(&spec));
            let target_prompt = attrs.prompt().replace("timbreA", "timbreB");
            let out = edit_real(
                &clip,
                &target_prompt,
                &direction,
                &config,
                DEFAULT_ALPHA,
                true,
                &denoiser,
                &schedule,
                &encoder,
                Some(&captioner),
            )
            .unwrap();
            let probe = attribute_probe(&from_model_space(&out.edited.data), &space).unwrap();
            let a = chromagram(&LatentClip::toy(spec.clone())).unwrap();
            let b = chromagram(&out.edited.with_data(from_model_space(&out.edited.data)))
                .unwrap();
            let sim = chroma_similarity(&a, &b).unwrap();
            let probe_hit = !probe.silence && probe.timbre == "timbreB";
            if probe_hit {
                inv_probe_ok += 1;
            }
            if sim >= 0.8 {
                inv_chroma_ok += 1;
            }
            if probe_hit && sim >= 0.8 {
                inv_hits += 1;
            }
        }
        println!(
            "transfer inversion: {}/{} (probe {}, chroma {}) [{:.1}s]",
            inv_hits,
            transfer_seeds,
            inv_probe_ok,
            inv_chroma_ok,
            t0.elapsed().as_secs_f64()
        );
    }

    // criterion 4 shape: the three-arm benchmark
    if bench_seeds > 0 {
        let t0 = Instant::now();
        let bank = CaptionBank::default_bank();
        let pairs = EditPair::default_timbre_pairs(&space);
        let report = run_benchmark(
            &denoiser,
            &pairs,
            bench_seeds,
            &BenchmarkConfig::default(),
            &schedule,
            &encoder,
            &bank,
            &space,
        );
        match report {
            Ok(r) => {
                println!(
                    "bench ({} seeds/pair): recon probe {:.3} [{:.1}s]",
                    bench_seeds,
                    r.reconstruction_probe_accuracy,
                    t0.elapsed().as_secs_f64()
                );
                for arm in &r.arms {
                    println!(
                        "  arm {:14} word {:.3} full {:.3} chroma {:.4}",
                        arm.name,
                        arm.target_word_rate,
                        arm.full_match_rate,
                        arm.eval.mean_chroma
                    );
                }
                println!(
                    "  paired: full {:.4} vs no_l2 {:.4}, diff {:.4}, p {:?}, significant {}",
                    r.chroma_paired.mean_full,
                    r.chroma_paired.mean_no_l2,
                    r.chroma_paired.mean_difference,
                    r.chroma_paired.p_value,
                    r.chroma_paired.significant
                );
            }
            Err(e) => println!("bench failed: {e} [{:.1}s]", t0.elapsed().as_secs_f64()),
        }
    }

    // keep denoiser alive for timing symmetry
    let _ = denoiser.config();
}
