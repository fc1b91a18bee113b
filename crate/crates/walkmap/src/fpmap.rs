//! Fingerprint-map training: group tagged observations per feature, impute
//! floor readings for unheard access points, fit one GP per feature, and
//! predict over the grid.
//!
//! Per-feature models are independent by construction (the per-AP training
//! decision), so features fit in parallel; each feature draws its optimizer
//! restarts from a stream derived from the base seed and the feature id,
//! keeping the whole map reproducible bit-for-bit for a fixed seed.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{FeatureId, FeatureKind, GridSpec, Location, TaggedObservation};
use crate::gp::{FitOptions, FitReport, GpModel, HyperBounds, Hyperparams};

/// Which feature set the map models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MapVariant {
    /// WiFi RSS features only.
    #[serde(rename = "wifi")]
    Wifi,
    /// WiFi plus magnetic field magnitude.
    #[serde(rename = "wifi+magnetic1")]
    WifiMagnetic1,
    /// WiFi plus magnetic magnitude and the absolute z component.
    #[serde(rename = "wifi+magnetic2")]
    WifiMagnetic2,
}

impl MapVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            MapVariant::Wifi => "wifi",
            MapVariant::WifiMagnetic1 => "wifi+magnetic1",
            MapVariant::WifiMagnetic2 => "wifi+magnetic2",
        }
    }

    pub fn parse(s: &str) -> Option<MapVariant> {
        match s {
            "wifi" => Some(MapVariant::Wifi),
            "wifi+magnetic1" => Some(MapVariant::WifiMagnetic1),
            "wifi+magnetic2" => Some(MapVariant::WifiMagnetic2),
            _ => None,
        }
    }

    pub fn includes(&self, kind: FeatureKind) -> bool {
        match kind {
            FeatureKind::WifiBssid => true,
            FeatureKind::MagneticMagnitude => *self != MapVariant::Wifi,
            FeatureKind::MagneticZ => *self == MapVariant::WifiMagnetic2,
        }
    }
}

impl std::fmt::Display for MapVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One raw magnetometer sample, device frame, microtesla.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagSample {
    pub t_ms: i64,
    pub mx: f64,
    pub my: f64,
    pub mz: f64,
}

/// The two magnetic feature values derived from one sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MagneticFeatureSample {
    pub t_ms: i64,
    /// sqrt(mx^2 + my^2 + mz^2)
    pub magnitude_ut: f64,
    /// |mz| of the device-frame z component.
    pub z_abs_ut: f64,
}

/// Derives the magnetic magnitude and absolute-z features per timestamp.
pub fn extract_magnetic_features(samples: &[MagSample]) -> Vec<MagneticFeatureSample> {
    samples
        .iter()
        .map(|s| MagneticFeatureSample {
            t_ms: s.t_ms,
            magnitude_ut: (s.mx * s.mx + s.my * s.my + s.mz * s.mz).sqrt(),
            z_abs_ut: s.mz.abs(),
        })
        .collect()
}

/// Floor-imputation rule for wifi features: lattice points in the walkable
/// area farther than `radius_m` from every real observation of the feature
/// receive a pseudo-observation at `floor_dbm`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImputationConfig {
    pub radius_m: f64,
    pub floor_dbm: f64,
    /// Lattice spacing for pseudo-observation placement.
    pub spacing_m: f64,
}

impl Default for ImputationConfig {
    fn default() -> Self {
        ImputationConfig {
            radius_m: 6.0,
            floor_dbm: -93.0,
            spacing_m: 1.0,
        }
    }
}

/// Places floor pseudo-observations for one wifi feature. Real observations
/// are never modified; pseudo-observations never fall within `radius_m` of a
/// real one.
pub fn impute_missing(
    feature: &FeatureId,
    observations: &[TaggedObservation],
    grid: &GridSpec,
    config: &ImputationConfig,
) -> Result<Vec<TaggedObservation>> {
    if !feature.is_wifi() {
        return Err(Error::NotWifiFeature(feature.to_string()));
    }
    let real: Vec<Location> = observations
        .iter()
        .filter(|o| o.feature == *feature)
        .map(|o| o.location)
        .collect();
    let bounds = grid.bounds();
    let mut pseudo = Vec::new();
    let mut y = bounds.min_y + config.spacing_m / 2.0;
    while y < bounds.max_y {
        let mut x = bounds.min_x + config.spacing_m / 2.0;
        while x < bounds.max_x {
            let p = Location { x, y };
            let walkable = grid.cell_of(&p).is_some_and(|c| grid.is_walkable(c));
            if walkable {
                let nearest = real
                    .iter()
                    .map(|r| r.distance(&p))
                    .fold(f64::INFINITY, f64::min);
                if nearest > config.radius_m {
                    pseudo.push(TaggedObservation {
                        feature: feature.clone(),
                        value: config.floor_dbm,
                        location: p,
                        scan_id: 0,
                    });
                }
            }
            x += config.spacing_m;
        }
        y += config.spacing_m;
    }
    Ok(pseudo)
}

/// How the training set was collected. Point-based sources carry full
/// per-scan vectors exploded into scalars; path-based sources are scalar
/// rows by construction. The per-feature training multisets are identical
/// either way.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainingSource {
    PointBased,
    PathBased,
}

/// Tagged observations ready for training.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub observations: Vec<TaggedObservation>,
    pub source: TrainingSource,
}

impl TrainingSet {
    pub fn new(observations: Vec<TaggedObservation>, source: TrainingSource) -> TrainingSet {
        TrainingSet {
            observations,
            source,
        }
    }

    /// Groups observations per feature, preserving input order within each.
    pub fn by_feature(&self) -> BTreeMap<FeatureId, Vec<&TaggedObservation>> {
        let mut groups: BTreeMap<FeatureId, Vec<&TaggedObservation>> = BTreeMap::new();
        for obs in &self.observations {
            groups.entry(obs.feature.clone()).or_default().push(obs);
        }
        groups
    }
}

/// Per-feature GP training configuration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpTrainConfig {
    pub bounds: HyperBounds,
    pub fit: FitOptions,
    /// Optional explicit starting point; the default is data-driven.
    pub init: Option<Hyperparams>,
    /// Cap on real observations per feature (deterministic even subsample);
    /// exact GP inference is cubic in n, so dense surveys need a ceiling.
    pub max_train_per_feature: Option<usize>,
    /// Subtract the per-feature empirical mean before fitting.
    pub center_mean: bool,
}

impl Default for GpTrainConfig {
    fn default() -> Self {
        GpTrainConfig {
            bounds: HyperBounds::default(),
            fit: FitOptions::default(),
            init: None,
            max_train_per_feature: Some(400),
            center_mean: true,
        }
    }
}

/// Why a feature is absent from the trained map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureStatus {
    Trained,
    /// Fewer than 2 real observations.
    DroppedTooFew,
    /// Magnetic feature excluded by the map variant.
    ExcludedByVariant,
}

/// Per-feature training outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureReport {
    pub feature: FeatureId,
    pub status: FeatureStatus,
    pub n_real: usize,
    pub n_imputed: usize,
    /// Observations actually used for fitting (after the cap).
    pub n_used: usize,
    pub hyper: Option<Hyperparams>,
    pub fit: Option<FitReport>,
}

/// Whole-map training outcome.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub features: Vec<FeatureReport>,
    /// Observations whose location fell outside the grid bounds.
    pub outside_grid: usize,
}

/// The trained map: one GP per retained feature over a shared grid.
#[derive(Clone, Debug)]
pub struct FingerprintMap {
    grid: GridSpec,
    variant: MapVariant,
    models: BTreeMap<FeatureId, GpModel>,
    report: TrainingReport,
}

/// Prediction at one walkable cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPrediction {
    pub cell_index: usize,
    pub center: Location,
    pub mean: f64,
    pub variance: f64,
}

impl FingerprintMap {
    /// Assembles a map from prebuilt models (deserialization and synthetic
    /// test instances).
    pub fn from_models(
        grid: GridSpec,
        variant: MapVariant,
        models: BTreeMap<FeatureId, GpModel>,
        report: TrainingReport,
    ) -> FingerprintMap {
        FingerprintMap {
            grid,
            variant,
            models,
            report,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn variant(&self) -> MapVariant {
        self.variant
    }

    pub fn models(&self) -> &BTreeMap<FeatureId, GpModel> {
        &self.models
    }

    pub fn model(&self, feature: &FeatureId) -> Result<&GpModel> {
        self.models
            .get(feature)
            .ok_or_else(|| Error::UnknownFeature(feature.to_string()))
    }

    /// Wifi features in canonical (id) order.
    pub fn wifi_features(&self) -> Vec<FeatureId> {
        self.models
            .keys()
            .filter(|f| f.is_wifi())
            .cloned()
            .collect()
    }

    pub fn report(&self) -> &TrainingReport {
        &self.report
    }

    /// Posterior mean and variance of one feature over every walkable cell,
    /// in row-major cell order.
    pub fn grid_predict(&self, feature: &FeatureId) -> Result<Vec<GridPrediction>> {
        let model = self.model(feature)?;
        Ok(self
            .grid
            .walkable_cells()
            .map(|(cell_index, center)| {
                let (mean, variance) = model.predict(&center);
                GridPrediction {
                    cell_index,
                    center,
                    mean,
                    variance,
                }
            })
            .collect())
    }
}

/// Stable per-feature seed: FNV-1a over the base seed and the feature name,
/// so per-feature streams are independent yet reproducible across runs and
/// platforms.
fn feature_seed(base: u64, feature: &FeatureId) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |b: u8| {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    };
    for b in base.to_le_bytes() {
        eat(b);
    }
    for b in feature.kind.as_str().bytes() {
        eat(b);
    }
    eat(b':');
    for b in feature.id.bytes() {
        eat(b);
    }
    h
}

/// Evenly spaced deterministic subsample of `v` down to `cap` elements.
fn subsample<T: Clone>(v: &[T], cap: usize) -> Vec<T> {
    if v.len() <= cap {
        return v.to_vec();
    }
    (0..cap).map(|i| v[i * v.len() / cap].clone()).collect()
}

/// Trains one GP per retained feature.
///
/// Features not in the variant are excluded; features with fewer than 2 real
/// observations are dropped (a floor-only model carries no location
/// information). Wifi features receive floor imputation before fitting.
pub fn train_map(
    training: &TrainingSet,
    grid: &GridSpec,
    variant: MapVariant,
    gp_config: &GpTrainConfig,
    imputation: &ImputationConfig,
) -> Result<FingerprintMap> {
    let bounds = grid.bounds();
    let mut outside_grid = 0usize;
    let mut kept = Vec::with_capacity(training.observations.len());
    for obs in &training.observations {
        if bounds.contains(&obs.location) {
            kept.push(obs.clone());
        } else {
            outside_grid += 1;
        }
    }
    let kept_set = TrainingSet::new(kept, training.source);
    let groups = kept_set.by_feature();

    struct FeatureTask {
        feature: FeatureId,
        real: Vec<TaggedObservation>,
    }
    let mut tasks = Vec::new();
    let mut reports_prelude = Vec::new();
    for (feature, obs) in &groups {
        if !variant.includes(feature.kind) {
            reports_prelude.push(FeatureReport {
                feature: feature.clone(),
                status: FeatureStatus::ExcludedByVariant,
                n_real: obs.len(),
                n_imputed: 0,
                n_used: 0,
                hyper: None,
                fit: None,
            });
            continue;
        }
        if obs.len() < 2 {
            reports_prelude.push(FeatureReport {
                feature: feature.clone(),
                status: FeatureStatus::DroppedTooFew,
                n_real: obs.len(),
                n_imputed: 0,
                n_used: 0,
                hyper: None,
                fit: None,
            });
            continue;
        }
        tasks.push(FeatureTask {
            feature: feature.clone(),
            real: obs.iter().map(|o| (*o).clone()).collect(),
        });
    }
    if tasks.is_empty() {
        return Err(Error::NoTrainableFeatures);
    }

    let fitted: Vec<Result<(FeatureId, GpModel, FeatureReport)>> = tasks
        .par_iter()
        .map(|task| {
            let pseudo = if task.feature.is_wifi() {
                impute_missing(&task.feature, &task.real, grid, imputation)?
            } else {
                Vec::new()
            };
            let n_real = task.real.len();
            let capped = match gp_config.max_train_per_feature {
                Some(cap) => subsample(&task.real, cap.max(2)),
                None => task.real.clone(),
            };
            let mut xs: Vec<Location> = capped.iter().map(|o| o.location).collect();
            let mut ys: Vec<f64> = capped.iter().map(|o| o.value).collect();
            xs.extend(pseudo.iter().map(|o| o.location));
            ys.extend(pseudo.iter().map(|o| o.value));
            let fit_opts = FitOptions {
                seed: feature_seed(gp_config.fit.seed, &task.feature),
                ..gp_config.fit
            };
            let n_used = xs.len();
            let (model, fit) = GpModel::fit(
                xs,
                ys,
                gp_config.init,
                &gp_config.bounds,
                &fit_opts,
                gp_config.center_mean,
            )
            .map_err(|e| Error::FeatureTraining {
                feature: task.feature.to_string(),
                source: Box::new(e),
            })?;
            let report = FeatureReport {
                feature: task.feature.clone(),
                status: FeatureStatus::Trained,
                n_real,
                n_imputed: pseudo.len(),
                n_used,
                hyper: Some(*model.hyper()),
                fit: Some(fit),
            };
            Ok((task.feature.clone(), model, report))
        })
        .collect();

    let mut models = BTreeMap::new();
    let mut reports = reports_prelude;
    for item in fitted {
        let (feature, model, report) = item?;
        models.insert(feature, model);
        reports.push(report);
    }
    reports.sort_by(|a, b| a.feature.cmp(&b.feature));

    Ok(FingerprintMap {
        grid: grid.clone(),
        variant,
        models,
        report: TrainingReport {
            features: reports,
            outside_grid,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Rect;
    use approx::assert_relative_eq;

    fn loc(x: f64, y: f64) -> Location {
        Location::new(x, y).unwrap()
    }

    fn corridor_grid(w: f64, h: f64, res: f64) -> GridSpec {
        GridSpec::build(&Rect::new(0.0, 0.0, w, h).unwrap(), res, None).unwrap()
    }

    fn wifi_obs(bssid: &str, value: f64, x: f64, y: f64, scan: u64) -> TaggedObservation {
        TaggedObservation::new(FeatureId::wifi(bssid), value, loc(x, y), scan).unwrap()
    }

    #[test]
    fn magnetic_feature_extraction() {
        let got = extract_magnetic_features(&[
            MagSample { t_ms: 0, mx: 0.0, my: 0.0, mz: 0.0 },
            MagSample { t_ms: 1, mx: 30.0, my: 40.0, mz: 0.0 },
            MagSample { t_ms: 2, mx: 0.0, my: 0.0, mz: -45.0 },
        ]);
        assert_eq!(got[0].magnitude_ut, 0.0);
        assert_eq!(got[0].z_abs_ut, 0.0);
        assert_eq!(got[1].magnitude_ut, 50.0);
        assert_eq!(got[1].z_abs_ut, 0.0);
        assert_eq!(got[2].magnitude_ut, 45.0);
        assert_eq!(got[2].z_abs_ut, 45.0);
    }

    #[test]
    fn imputation_fully_covered_yields_nothing() {
        let grid = corridor_grid(8.0, 4.0, 0.5);
        let f = FeatureId::wifi("ap");
        // 2 m spaced observations: every lattice point is within 6 m.
        let mut obs = Vec::new();
        for i in 0..5 {
            for j in 0..3 {
                obs.push(wifi_obs("ap", -50.0, i as f64 * 2.0, j as f64 * 2.0, 1));
            }
        }
        let pseudo = impute_missing(&f, &obs, &grid, &ImputationConfig::default()).unwrap();
        assert!(pseudo.is_empty());
    }

    #[test]
    fn imputation_matches_brute_force_oracle() {
        // Single observation in a corner of a 20 x 4 corridor: lattice points
        // farther than 6 m get the floor value.
        let grid = corridor_grid(20.0, 4.0, 0.5);
        let f = FeatureId::wifi("ap");
        let obs = vec![wifi_obs("ap", -40.0, 0.5, 0.5, 1)];
        let cfg = ImputationConfig::default();
        let pseudo = impute_missing(&f, &obs, &grid, &cfg).unwrap();

        // Brute-force oracle over the same lattice definition.
        let mut expected = Vec::new();
        let mut y = 0.5;
        while y < 4.0 {
            let mut x = 0.5;
            while x < 20.0 {
                let d = ((x - 0.5f64).powi(2) + (y - 0.5f64).powi(2)).sqrt();
                if d > 6.0 {
                    expected.push((x, y));
                }
                x += 1.0;
            }
            y += 1.0;
        }
        assert!(!expected.is_empty());
        assert_eq!(pseudo.len(), expected.len());
        for (p, (ex, ey)) in pseudo.iter().zip(&expected) {
            assert_relative_eq!(p.location.x, *ex);
            assert_relative_eq!(p.location.y, *ey);
            assert_eq!(p.value, -93.0);
        }
        // And none of them is ever within the radius of a real observation.
        for p in &pseudo {
            assert!(p.location.distance(&obs[0].location) > cfg.radius_m);
        }
    }

    #[test]
    fn imputation_infinite_radius_is_empty() {
        let grid = corridor_grid(20.0, 4.0, 0.5);
        let f = FeatureId::wifi("ap");
        let obs = vec![wifi_obs("ap", -40.0, 0.5, 0.5, 1)];
        let cfg = ImputationConfig {
            radius_m: f64::INFINITY,
            ..Default::default()
        };
        assert!(impute_missing(&f, &obs, &grid, &cfg).unwrap().is_empty());
    }

    #[test]
    fn imputation_rejects_magnetic_features() {
        let grid = corridor_grid(4.0, 4.0, 0.5);
        assert!(matches!(
            impute_missing(
                &FeatureId::magnetic_magnitude(),
                &[],
                &grid,
                &ImputationConfig::default()
            ),
            Err(Error::NotWifiFeature(_))
        ));
    }

    fn line_training_set(bssid: &str) -> TrainingSet {
        let obs: Vec<TaggedObservation> = (0..10)
            .map(|i| wifi_obs(bssid, -40.0 - i as f64 * 2.0, i as f64, 0.5, i as u64))
            .collect();
        TrainingSet::new(obs, TrainingSource::PathBased)
    }

    #[test]
    fn train_single_ap_line() {
        let grid = corridor_grid(10.0, 1.0, 0.5);
        let training = line_training_set("ap1");
        let map = train_map(
            &training,
            &grid,
            MapVariant::Wifi,
            &GpTrainConfig::default(),
            &ImputationConfig::default(),
        )
        .unwrap();
        assert_eq!(map.models().len(), 1);
        let model = map.model(&FeatureId::wifi("ap1")).unwrap();
        let sigma_n = model.hyper().sigma_n2.sqrt();
        // The posterior mean at a training location stays within 2 sigma_n of
        // the observed value.
        let (mean, _) = model.predict(&loc(3.0, 0.5));
        assert!(
            (mean - -46.0).abs() <= 2.0 * sigma_n.max(0.5),
            "mean {mean}, sigma_n {sigma_n}"
        );
    }

    #[test]
    fn variant_controls_model_count() {
        let grid = corridor_grid(10.0, 1.0, 0.5);
        let mut observations = line_training_set("ap1").observations;
        observations.extend(line_training_set("ap2").observations);
        for i in 0..10 {
            observations.push(
                TaggedObservation::new(
                    FeatureId::magnetic_magnitude(),
                    50.0 + i as f64 * 0.3,
                    loc(i as f64, 0.5),
                    0,
                )
                .unwrap(),
            );
            observations.push(
                TaggedObservation::new(
                    FeatureId::magnetic_z(),
                    44.0 + (i as f64 * 0.2),
                    loc(i as f64, 0.5),
                    0,
                )
                .unwrap(),
            );
        }
        let training = TrainingSet::new(observations, TrainingSource::PathBased);
        let cfg = GpTrainConfig::default();
        let imp = ImputationConfig::default();

        let wifi_only = train_map(&training, &grid, MapVariant::Wifi, &cfg, &imp).unwrap();
        assert_eq!(wifi_only.models().len(), 2);
        assert_eq!(
            wifi_only
                .report()
                .features
                .iter()
                .filter(|f| f.status == FeatureStatus::ExcludedByVariant)
                .count(),
            2
        );

        let mag2 = train_map(&training, &grid, MapVariant::WifiMagnetic2, &cfg, &imp).unwrap();
        assert_eq!(mag2.models().len(), 2 + 2);
    }

    #[test]
    fn training_is_deterministic() {
        let grid = corridor_grid(10.0, 1.0, 0.5);
        let training = line_training_set("ap1");
        let cfg = GpTrainConfig::default();
        let imp = ImputationConfig::default();
        let a = train_map(&training, &grid, MapVariant::Wifi, &cfg, &imp).unwrap();
        let b = train_map(&training, &grid, MapVariant::Wifi, &cfg, &imp).unwrap();
        let ha = a.model(&FeatureId::wifi("ap1")).unwrap().hyper();
        let hb = b.model(&FeatureId::wifi("ap1")).unwrap().hyper();
        assert_eq!(ha.sigma_f2.to_bits(), hb.sigma_f2.to_bits());
        assert_eq!(ha.length_scale_l.to_bits(), hb.length_scale_l.to_bits());
        assert_eq!(ha.sigma_n2.to_bits(), hb.sigma_n2.to_bits());
    }

    #[test]
    fn per_feature_independence() {
        let grid = corridor_grid(10.0, 1.0, 0.5);
        let mut both = line_training_set("ap1").observations;
        both.extend(line_training_set("ap2").observations);
        let with_both = train_map(
            &TrainingSet::new(both.clone(), TrainingSource::PathBased),
            &grid,
            MapVariant::Wifi,
            &GpTrainConfig::default(),
            &ImputationConfig::default(),
        )
        .unwrap();
        let only_ap1 = train_map(
            &line_training_set("ap1"),
            &grid,
            MapVariant::Wifi,
            &GpTrainConfig::default(),
            &ImputationConfig::default(),
        )
        .unwrap();
        let a = with_both.model(&FeatureId::wifi("ap1")).unwrap();
        let b = only_ap1.model(&FeatureId::wifi("ap1")).unwrap();
        assert_eq!(a.hyper().sigma_f2.to_bits(), b.hyper().sigma_f2.to_bits());
        assert_eq!(
            a.hyper().length_scale_l.to_bits(),
            b.hyper().length_scale_l.to_bits()
        );
        assert_eq!(a.hyper().sigma_n2.to_bits(), b.hyper().sigma_n2.to_bits());
        for x in [0.3, 2.7, 9.1] {
            let (ma, va) = a.predict(&loc(x, 0.5));
            let (mb, vb) = b.predict(&loc(x, 0.5));
            assert_eq!(ma.to_bits(), mb.to_bits());
            assert_eq!(va.to_bits(), vb.to_bits());
        }
    }

    #[test]
    fn too_few_observations_dropped() {
        let grid = corridor_grid(10.0, 1.0, 0.5);
        let mut obs = line_training_set("ap1").observations;
        obs.push(wifi_obs("lonely", -70.0, 5.0, 0.5, 3));
        let map = train_map(
            &TrainingSet::new(obs, TrainingSource::PathBased),
            &grid,
            MapVariant::Wifi,
            &GpTrainConfig::default(),
            &ImputationConfig::default(),
        )
        .unwrap();
        assert_eq!(map.models().len(), 1);
        let dropped = map
            .report()
            .features
            .iter()
            .find(|f| f.feature.id == "lonely")
            .unwrap();
        assert_eq!(dropped.status, FeatureStatus::DroppedTooFew);
        assert_eq!(dropped.n_real, 1);
    }

    #[test]
    fn no_trainable_features_is_an_error() {
        let grid = corridor_grid(10.0, 1.0, 0.5);
        let obs = vec![wifi_obs("a", -70.0, 5.0, 0.5, 1)];
        assert!(matches!(
            train_map(
                &TrainingSet::new(obs, TrainingSource::PathBased),
                &grid,
                MapVariant::Wifi,
                &GpTrainConfig::default(),
                &ImputationConfig::default(),
            ),
            Err(Error::NoTrainableFeatures)
        ));
    }

    #[test]
    fn point_vectors_explode_to_same_multisets() {
        // A point-based scan vector, exploded to scalars at the same
        // location, groups identically to path-based scalar rows.
        let l = loc(2.0, 0.5);
        let vector_scan: Vec<(&str, f64)> = vec![("a", -40.0), ("b", -55.0), ("c", -60.0)];
        let exploded: Vec<TaggedObservation> = vector_scan
            .iter()
            .map(|(id, v)| wifi_obs(id, *v, l.x, l.y, 7))
            .collect();
        let scalar_rows: Vec<TaggedObservation> = vec![
            wifi_obs("a", -40.0, 2.0, 0.5, 7),
            wifi_obs("b", -55.0, 2.0, 0.5, 7),
            wifi_obs("c", -60.0, 2.0, 0.5, 7),
        ];
        let point = TrainingSet::new(exploded, TrainingSource::PointBased);
        let path = TrainingSet::new(scalar_rows, TrainingSource::PathBased);
        let gp: Vec<_> = point.by_feature().into_iter().collect();
        let gq: Vec<_> = path.by_feature().into_iter().collect();
        assert_eq!(gp.len(), gq.len());
        for ((fa, oa), (fb, ob)) in gp.iter().zip(&gq) {
            assert_eq!(fa, fb);
            let va: Vec<f64> = oa.iter().map(|o| o.value).collect();
            let vb: Vec<f64> = ob.iter().map(|o| o.value).collect();
            assert_eq!(va, vb);
        }
    }

    #[test]
    fn grid_predict_shapes_and_unknown_feature() {
        let grid = corridor_grid(10.0, 1.0, 0.5);
        let map = train_map(
            &line_training_set("ap1"),
            &grid,
            MapVariant::Wifi,
            &GpTrainConfig::default(),
            &ImputationConfig::default(),
        )
        .unwrap();
        let preds = map.grid_predict(&FeatureId::wifi("ap1")).unwrap();
        assert_eq!(preds.len(), grid.walkable_count());
        assert!(matches!(
            map.grid_predict(&FeatureId::wifi("nope")),
            Err(Error::UnknownFeature(_))
        ));
    }

    #[test]
    fn single_point_model_peaks_at_training_location() {
        use crate::gp::GpModel;
        let grid = corridor_grid(10.0, 1.0, 0.1);
        let hyper = Hyperparams {
            sigma_f2: 9.0,
            length_scale_l: 3.0,
            sigma_n2: 0.5,
        };
        let train = loc(5.0, 0.5);
        let model =
            GpModel::with_hyperparams(vec![train], vec![-40.0], hyper, false).unwrap();
        let mut models = BTreeMap::new();
        models.insert(FeatureId::wifi("ap"), model);
        let map = FingerprintMap::from_models(
            grid,
            MapVariant::Wifi,
            models,
            TrainingReport::default(),
        );
        let preds = map.grid_predict(&FeatureId::wifi("ap")).unwrap();
        // Peak cell is the one containing the training point, and the mean
        // decays monotonically with distance along the +x ray from the peak.
        let peak = preds
            .iter()
            .max_by(|a, b| a.mean.partial_cmp(&b.mean).unwrap())
            .unwrap();
        assert!(peak.center.distance(&train) <= 0.075 * 2.0);
        let mut along_ray: Vec<&GridPrediction> = preds
            .iter()
            .filter(|p| (p.center.y - 0.55).abs() < 1e-9 && p.center.x >= 5.0)
            .collect();
        along_ray.sort_by(|a, b| a.center.x.partial_cmp(&b.center.x).unwrap());
        for w in along_ray.windows(2) {
            assert!(w[1].mean <= w[0].mean + 1e-12);
        }
    }

    #[test]
    fn empty_model_predicts_prior_everywhere() {
        use crate::gp::GpModel;
        let grid = corridor_grid(4.0, 1.0, 0.5);
        let hyper = Hyperparams {
            sigma_f2: 2.0,
            length_scale_l: 1.0,
            sigma_n2: 0.3,
        };
        let model = GpModel::with_hyperparams(vec![], vec![], hyper, true).unwrap();
        let mut models = BTreeMap::new();
        models.insert(FeatureId::magnetic_magnitude(), model);
        let map = FingerprintMap::from_models(
            grid,
            MapVariant::WifiMagnetic1,
            models,
            TrainingReport::default(),
        );
        for p in map.grid_predict(&FeatureId::magnetic_magnitude()).unwrap() {
            assert_eq!(p.mean, 0.0);
            assert_relative_eq!(p.variance, 2.3);
        }
    }
}
