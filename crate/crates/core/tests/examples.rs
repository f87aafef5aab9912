//! Every runnable example doubles as a smoke test.

macro_rules! example {
    ($module:ident, $file:literal) => {
        #[allow(dead_code)]
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }
    };
}

example!(discretize_vehicle, "discretize_vehicle.rs");
example!(regulator_equations, "regulator_equations.rs");
example!(stabilizing_gain, "stabilizing_gain.rs");
example!(utility_invariance, "utility_invariance.rs");
example!(streaming_engine, "streaming_engine.rs");
example!(classify, "classify.rs");
example!(vehicle_demo, "vehicle_demo.rs");
example!(file_formats, "file_formats.rs");

#[test]
fn discretize_vehicle_runs() {
    discretize_vehicle::run_example().unwrap();
}

#[test]
fn regulator_equations_runs() {
    regulator_equations::run_example().unwrap();
}

#[test]
fn stabilizing_gain_runs() {
    stabilizing_gain::run_example().unwrap();
}

#[test]
fn utility_invariance_runs() {
    utility_invariance::run_example().unwrap();
}

#[test]
fn streaming_engine_runs() {
    streaming_engine::run_example().unwrap();
}

#[test]
fn classify_runs() {
    classify::run_example().unwrap();
}

#[test]
fn vehicle_demo_runs() {
    vehicle_demo::run_example().unwrap();
}

#[test]
fn file_formats_runs() {
    file_formats::run_example().unwrap();
}
