//! Named hyperparameter grids.
//!
//! The `*-small-batch` and `*-large-batch` presets reproduce the published
//! language-model grids verbatim. The `*-desk` presets are for the synthetic
//! problems here: their learning-rate-like axes are multiples of a curvature
//! scale (`1 / trace` when minibatches are smaller than the dataset,
//! `1 / lambda_max` otherwise).

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    /// Keys set by the preset (TOML literals) unless the user set them.
    pub fixed: &'static [(&'static str, &'static str)],
    pub grid: &'static [(&'static str, &'static [f64])],
    /// Grid axes that are multiples of the curvature scale.
    pub curvature_scaled: &'static [&'static str],
    /// Cosine warmup as a fraction of `run.steps`.
    pub warmup_fraction: Option<f64>,
}

const LR3: &[f64] = &[3.16e-4, 1e-3, 3.16e-3];
const LR4: &[f64] = &[3.16e-4, 1e-3, 3.16e-3, 1e-2];
const LR_LARGE: &[f64] = &[1e-3, 3.16e-3, 1e-2];

const fn p(
    name: &'static str,
    description: &'static str,
    fixed: &'static [(&'static str, &'static str)],
    grid: &'static [(&'static str, &'static [f64])],
) -> Preset {
    Preset {
        name,
        description,
        fixed,
        grid,
        curvature_scaled: &[],
        warmup_fraction: None,
    }
}

pub const PRESETS: &[Preset] = &[
    p(
        "adamw-small-batch",
        "AdamW, cosine decay with warmup",
        &[("optimizer.algorithm", "\"adamw\""), ("optimizer.lr_schedule", "\"cosine\"")],
        &[("optimizer.lr", LR3), ("optimizer.beta1", &[0.9, 0.95]), ("optimizer.beta2", &[0.99, 0.999, 0.99968, 0.9999])],
    ),
    Preset {
        // The shorter of the two warmups, in the same ratio (10 : 51.2) to the default 5%.
        warmup_fraction: Some(0.05 * 10.0 / 51.2),
        ..p(
            "adamw-short-warmup-small-batch",
            "AdamW, cosine decay with a short warmup",
            &[
                ("optimizer.algorithm", "\"adamw\""),
                ("optimizer.lr_schedule", "\"cosine\""),
                ("optimizer.beta1", "0.9"),
                ("optimizer.beta2", "0.999"),
            ],
            &[("optimizer.lr", LR3)],
        )
    },
    p(
        "adamw-avg-small-batch",
        "AdamW momentum with tailed weight averaging, constant learning rate",
        &[
            ("optimizer.algorithm", "\"accel-adam-avg\""),
            ("optimizer.beta1", "0.9"),
            ("optimizer.beta3", "0.9"),
            ("optimizer.averaging", "\"tailed\""),
        ],
        &[("optimizer.lr", LR3), ("optimizer.beta2", &[0.99, 0.997, 0.999, 0.9997]), ("optimizer.delta", &[0.05, 0.1, 0.2])],
    ),
    p(
        "adamw-cosine-avg-small-batch",
        "AdamW momentum with tailed weight averaging, cosine decay",
        &[
            ("optimizer.algorithm", "\"accel-adam-avg\""),
            ("optimizer.lr_schedule", "\"cosine\""),
            ("optimizer.beta1", "0.9"),
            ("optimizer.beta3", "0.9"),
            ("optimizer.beta2", "0.999"),
            ("optimizer.averaging", "\"tailed\""),
        ],
        &[("optimizer.lr", LR3), ("optimizer.delta", &[0.025, 0.05, 0.1])],
    ),
    p(
        "accel-adamw-cosine-small-batch",
        "accelerated-SGD-style Adam, cosine decay",
        &[
            ("optimizer.algorithm", "\"accel-adam-avg\""),
            ("optimizer.lr_schedule", "\"cosine\""),
            ("optimizer.beta3", "0.9"),
        ],
        &[("optimizer.lr", LR3), ("optimizer.beta1", &[0.999, 0.99968, 0.9999]), ("optimizer.beta2", &[0.99, 0.9968, 0.999])],
    ),
    p(
        "accel-adamw-avg-small-batch",
        "accelerated-SGD-style Adam with weight averaging, constant learning rate",
        &[
            ("optimizer.algorithm", "\"accel-adam-avg\""),
            ("optimizer.beta2", "0.999"),
            ("optimizer.beta3", "0.9"),
            ("optimizer.averaging", "\"tailed\""),
        ],
        &[("optimizer.lr", LR3), ("optimizer.beta1", &[0.99684, 0.999]), ("optimizer.delta", &[0.05, 0.1])],
    ),
    p(
        "accel-adamw-cosine-avg-small-batch",
        "accelerated-SGD-style Adam with weight averaging, cosine decay",
        &[
            ("optimizer.algorithm", "\"accel-adam-avg\""),
            ("optimizer.lr_schedule", "\"cosine\""),
            ("optimizer.beta2", "0.999"),
            ("optimizer.beta3", "0.9"),
            ("optimizer.averaging", "\"tailed\""),
        ],
        &[("optimizer.lr", LR3), ("optimizer.beta1", &[0.99684, 0.999]), ("optimizer.delta", &[0.05, 0.1])],
    ),
    p(
        "sf-adamw-small-batch",
        "Schedule-Free AdamW, constant learning rate",
        &[("optimizer.algorithm", "\"schedule-free-adamw\""), ("optimizer.beta2", "0.999")],
        &[("optimizer.lr", LR4), ("optimizer.beta1", &[0.8, 0.9, 0.95])],
    ),
    p(
        "sf-adamw-cosine-small-batch",
        "Schedule-Free AdamW, cosine decay",
        &[
            ("optimizer.algorithm", "\"schedule-free-adamw\""),
            ("optimizer.lr_schedule", "\"cosine\""),
            ("optimizer.beta2", "0.999"),
        ],
        &[("optimizer.lr", LR4), ("optimizer.beta1", &[0.8, 0.9, 0.95])],
    ),
    p(
        "mars-small-batch",
        "MARS-Approx",
        &[("optimizer.algorithm", "\"mars-approx\"")],
        &[
            ("optimizer.lr", LR4),
            ("optimizer.beta1", &[0.9, 0.95, 0.99]),
            ("optimizer.beta2", &[0.99, 0.999]),
            ("optimizer.gamma", &[0.0, 0.01, 0.02, 0.03, 0.04, 0.05]),
        ],
    ),
    p(
        "ademamix-small-batch",
        "AdEMAMix",
        &[("optimizer.algorithm", "\"ademamix\""), ("optimizer.beta2", "0.999")],
        &[
            ("optimizer.lr", LR3),
            ("optimizer.beta1", &[0.0, 0.9]),
            ("optimizer.beta3", &[0.99, 0.999, 0.9999]),
            ("optimizer.alpha", &[2.0, 4.0, 8.0, 16.0]),
        ],
    ),
    p(
        "sim-ademamix-small-batch",
        "Simplified-AdEMAMix",
        &[("optimizer.algorithm", "\"simplified-ademamix\""), ("optimizer.beta2", "0.999")],
        &[
            ("optimizer.lr", &[1e-6, 3.16e-6, 1e-5, 3.16e-5]),
            ("optimizer.beta1", &[0.99, 0.999, 0.9999]),
            ("optimizer.alpha", &[10.0, 20.0, 50.0, 100.0]),
        ],
    ),
    p(
        "sf-adamw-large-batch",
        "Schedule-Free AdamW, large batch",
        &[("optimizer.algorithm", "\"schedule-free-adamw\"")],
        &[
            ("optimizer.lr", LR_LARGE),
            ("optimizer.beta1", &[0.8, 0.9, 0.95]),
            ("optimizer.beta2", &[0.9, 0.95]),
            ("optimizer.r", &[0.0, 5.0, 9.0, 50.0]),
        ],
    ),
    p(
        "adamw-large-batch",
        "AdamW, large batch",
        &[("optimizer.algorithm", "\"adamw\"")],
        &[("optimizer.lr", LR_LARGE), ("optimizer.beta1", &[0.9, 0.95]), ("optimizer.beta2", &[0.9, 0.95])],
    ),
    p(
        "laprop-large-batch",
        "LAProp, large batch",
        &[("optimizer.algorithm", "\"laprop\"")],
        &[("optimizer.lr", LR_LARGE), ("optimizer.beta1", &[0.9, 0.95]), ("optimizer.beta2", &[0.9, 0.95])],
    ),
    p(
        "ademamix-large-batch",
        "AdEMAMix, large batch",
        &[("optimizer.algorithm", "\"ademamix\""), ("optimizer.beta2", "0.95")],
        &[
            ("optimizer.lr", LR_LARGE),
            ("optimizer.beta1", &[0.0, 0.9]),
            ("optimizer.beta3", &[0.9, 0.95, 0.99]),
            ("optimizer.alpha", &[2.0, 4.0, 8.0, 16.0]),
        ],
    ),
    p(
        "sim-ademamix-large-batch",
        "Simplified-AdEMAMix, large batch",
        &[("optimizer.algorithm", "\"simplified-ademamix\""), ("optimizer.beta2", "0.95")],
        &[
            ("optimizer.lr", &[1e-4, 3.16e-4, 1e-3]),
            ("optimizer.beta1", &[0.9, 0.95, 0.99]),
            ("optimizer.alpha", &[0.0, 0.5, 1.0]),
        ],
    ),
    Preset {
        curvature_scaled: &["optimizer.lr"],
        ..p(
            "sgd-momentum-desk",
            "heavy-ball momentum on synthetic problems (lr in curvature units)",
            &[("optimizer.algorithm", "\"sgd-momentum\"")],
            &[("optimizer.lr", &[0.05, 0.1, 0.25, 0.5, 1.0]), ("optimizer.beta1", &[0.0, 0.5, 0.9, 0.99])],
        )
    },
    Preset {
        curvature_scaled: &["optimizer.lr", "optimizer.alpha"],
        ..p(
            "accel-sgd-desk",
            "general accelerated SGD on synthetic problems (lr = eta_a and alpha = alpha_a in curvature units)",
            &[("optimizer.algorithm", "\"accel-sgd\"")],
            &[
                ("optimizer.lr", &[1e-2, 3e-3, 1e-3]),
                ("optimizer.alpha", &[0.25, 0.5, 1.0]),
                ("optimizer.beta1", &[0.99, 0.999, 0.9999]),
            ],
        )
    },
];

pub fn preset(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        for (i, a) in PRESETS.iter().enumerate() {
            assert!(
                PRESETS[i + 1..].iter().all(|b| b.name != a.name),
                "{}",
                a.name
            );
        }
    }

    #[test]
    fn published_grids() {
        let axis = |p: &str, k: &str| {
            preset(p)
                .unwrap()
                .grid
                .iter()
                .find(|(n, _)| *n == k)
                .unwrap()
                .1
        };
        assert_eq!(
            axis("ademamix-small-batch", "optimizer.alpha"),
            &[2.0, 4.0, 8.0, 16.0]
        );
        assert_eq!(
            axis("sim-ademamix-large-batch", "optimizer.alpha"),
            &[0.0, 0.5, 1.0]
        );
        assert_eq!(
            axis("adamw-small-batch", "optimizer.beta2"),
            &[0.99, 0.999, 0.99968, 0.9999]
        );
        assert_eq!(
            axis("sf-adamw-large-batch", "optimizer.r"),
            &[0.0, 5.0, 9.0, 50.0]
        );
        assert_eq!(
            PRESETS
                .iter()
                .filter(|p| p.name.ends_with("-small-batch"))
                .count(),
            12
        );
        assert_eq!(
            PRESETS
                .iter()
                .filter(|p| p.name.ends_with("-large-batch"))
                .count(),
            5
        );
    }
}
