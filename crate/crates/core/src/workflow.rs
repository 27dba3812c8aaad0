//! Offline-stage helpers shared by the CLI and the tests: building POD and
//! autoencoder decoders from a snapshot set, and hyper-reduction samples.

use log::info;

use crate::autoencoder::{train, Architecture, Normalization, SparseAutoencoder, TrainConfig, TrainReport};
use crate::dd::DdLayout;
use crate::decoder::{IdentityDecoder, LinearDecoder};
use crate::error::Result;
use crate::hyper::{sample_subdomain, SamplingMatrix};
use crate::par;
use crate::pod::pod;
use crate::rom::SubdomainDecoders;
use crate::snapshots::SnapshotSet;

/// Latent sizes `(n_i^Ω, n_i^Γ)`, equal on every subdomain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RomSizes {
    pub n_omega: usize,
    pub n_gamma: usize,
}

/// Autoencoder shape options; `None` picks the per-network default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeShape {
    pub hidden: Option<usize>,
    pub band: Option<usize>,
    pub separation: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Part {
    Interior,
    Interface,
}

impl Part {
    pub fn name(self) -> &'static str {
        match self {
            Part::Interior => "omega",
            Part::Interface => "gamma",
        }
    }
}

/// Seed of one network, derived from the master seed.
pub fn network_seed(master: u64, subdomain: usize, part: Part) -> u64 {
    let k = 2 * subdomain as u64 + matches!(part, Part::Interface) as u64;
    master.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k.wrapping_mul(0xBF58_476D_1CE4_E5B9)) ^ k
}

pub fn pod_decoders(snap: &SnapshotSet, sizes: RomSizes) -> Result<Vec<SubdomainDecoders>> {
    let bases = par::map_range(snap.layout.n_subdomains(), |i| -> Result<SubdomainDecoders> {
        Ok(SubdomainDecoders {
            interior: Box::new(LinearDecoder::from_pod(&pod(&snap.interior[i], sizes.n_omega)?)),
            interface: Box::new(LinearDecoder::from_pod(&pod(&snap.interface[i], sizes.n_gamma)?)),
        })
    });
    bases.into_iter().collect()
}

/// POD interior decoders with unreduced (identity) interfaces.
pub fn pod_interior_identity_interface(snap: &SnapshotSet, n_omega: usize) -> Result<Vec<SubdomainDecoders>> {
    (0..snap.layout.n_subdomains())
        .map(|i| {
            Ok(SubdomainDecoders {
                interior: Box::new(LinearDecoder::from_pod(&pod(&snap.interior[i], n_omega)?)),
                interface: Box::new(IdentityDecoder::new(snap.layout.subdomain(i).n_interface())),
            })
        })
        .collect()
}

pub fn identity_decoders(snap: &SnapshotSet) -> Vec<SubdomainDecoders> {
    snap.layout
        .subdomains()
        .iter()
        .map(|s| SubdomainDecoders {
            interior: Box::new(IdentityDecoder::new(s.n_interior())),
            interface: Box::new(IdentityDecoder::new(s.n_interface())),
        })
        .collect()
}

/// Architecture of one network given the shape options.
pub fn architecture(layout: &DdLayout, subdomain: usize, part: Part, latent: usize, shape: &AeShape) -> Architecture {
    let sd = layout.subdomain(subdomain);
    let idx = match part {
        Part::Interior => &sd.interior,
        Part::Interface => &sd.interface,
    };
    let base = Architecture::with_defaults(idx.len(), latent, layout.row_stride(idx));
    Architecture {
        latent,
        hidden: shape.hidden.unwrap_or(base.hidden),
        band: shape.band.unwrap_or(base.band),
        separation: shape.separation.unwrap_or(base.separation),
    }
}

pub struct TrainJob {
    pub subdomain: usize,
    pub part: Part,
}

/// Training jobs for the given subdomains (all when `None`), interior
/// before interface.
pub fn train_jobs(n_subdomains: usize, only: Option<&[usize]>) -> Vec<TrainJob> {
    (0..n_subdomains)
        .filter(|i| only.is_none_or(|o| o.contains(i)))
        .flat_map(|i| [Part::Interior, Part::Interface].map(|part| TrainJob { subdomain: i, part }))
        .collect()
}

/// Trains the networks of `jobs` concurrently. Each result is independent,
/// so one diverging network does not stop the others.
pub fn train_autoencoders(
    snap: &SnapshotSet,
    sizes: RomSizes,
    shape: &AeShape,
    cfg: &TrainConfig,
    jobs: &[TrainJob],
) -> Vec<Result<(SparseAutoencoder, TrainReport)>> {
    par::map_slice(jobs, |job| {
        let (data, latent) = match job.part {
            Part::Interior => (&snap.interior[job.subdomain], sizes.n_omega),
            Part::Interface => (&snap.interface[job.subdomain], sizes.n_gamma),
        };
        let arch = architecture(&snap.layout, job.subdomain, job.part, latent, shape);
        let cfg = TrainConfig {
            seed: network_seed(cfg.seed, job.subdomain, job.part),
            ..cfg.clone()
        };
        let out = train(data, &arch, &cfg);
        if let Ok((_, r)) = &out {
            info!(
                "subdomain {} {}: best validation loss {:.3e} at epoch {} of {}",
                job.subdomain,
                job.part.name(),
                r.best_validation_loss(),
                r.best_epoch,
                r.epochs_run
            );
        }
        out
    })
}

/// Pairs trained networks into per-subdomain decoders.
pub fn autoencoder_decoders(interior: Vec<SparseAutoencoder>, interface: Vec<SparseAutoencoder>) -> Vec<SubdomainDecoders> {
    interior
        .into_iter()
        .zip(interface)
        .map(|(a, b)| SubdomainDecoders {
            interior: Box::new(a),
            interface: Box::new(b),
        })
        .collect()
}

/// Greedy HR samples for every subdomain from its residual snapshots.
pub fn hr_samples(snap: &SnapshotSet, n_samples: usize) -> Result<Vec<SamplingMatrix>> {
    par::map_range(snap.layout.n_subdomains(), |i| {
        let n = n_samples.min(snap.layout.subdomain(i).rows.len());
        sample_subdomain(i, &snap.residuals[i], n)
    })
    .into_iter()
    .collect()
}

/// Default number of weak-constraint rows: half the constraint count, but
/// no more than half the total interface latent dimension so the
/// constraint Jacobian keeps full row rank.
pub fn default_n_c(n_constraints: usize, total_interface_latent: usize) -> usize {
    let half = (n_constraints as f64 / 2.0).round() as usize;
    half.min(total_interface_latent / 2).max(1).min(n_constraints.max(1))
}

/// Parameter counts of the untrained autoencoder pairs of every subdomain.
/// A subdomain without interface gets a single network with latent size
/// `n_omega + n_gamma`.
pub fn autoencoder_parameter_counts(layout: &DdLayout, sizes: RomSizes, shape: &AeShape) -> Result<Vec<usize>> {
    (0..layout.n_subdomains())
        .map(|i| {
            let sd = layout.subdomain(i);
            let count = |part: Part, n: usize, latent: usize| -> Result<usize> {
                let arch = architecture(layout, i, part, latent, shape);
                Ok(SparseAutoencoder::zeros(n, arch, Normalization::identity(n))?.n_parameters())
            };
            if sd.n_interface() == 0 {
                count(Part::Interior, sd.n_interior(), sizes.n_omega + sizes.n_gamma)
            } else {
                Ok(count(Part::Interior, sd.n_interior(), sizes.n_omega)? + count(Part::Interface, sd.n_interface(), sizes.n_gamma)?)
            }
        })
        .collect()
}
