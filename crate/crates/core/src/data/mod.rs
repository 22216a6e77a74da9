//! Point-cloud ingestion, synthetic shape datasets, augmentation and the
//! sampling primitives used by structure construction.

pub mod manifest;
pub mod off;
pub mod pcld;
pub mod pointcloud;
pub mod sampling;
pub mod schedule;
pub mod synthetic;

pub use manifest::{load_manifest, DatasetManifest, Recipe, SampleEntry, Split};
pub use off::{sample_mesh_surface, OffMesh};
pub use pcld::{read_pointcloud_file, write_pointcloud_file};
pub use pointcloud::{
    augment, normalize_unit_sphere, resample, rotate_about_z, Augmentation, Point, PointCloud,
};
pub use sampling::{farthest_point_sampling, knn_query};
pub use schedule::IncrementalSchedule;
pub use synthetic::{
    generate_shape, generate_synthetic_dataset, mix_seed, ShapeKind, SyntheticClass, SyntheticSpec,
};
