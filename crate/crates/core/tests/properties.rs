mod support {
    pub mod properties;
}

use support::properties::{self, CASES};

macro_rules! property_tests {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                properties::$name(CASES).unwrap();
            }
        )*
    };
}

property_tests!(
    velocity_clamp,
    rest_fixpoint,
    commutation,
    turn_alternation,
    rotation_invariance,
    monotonicity,
    one_step_soundness,
    k_step_soundness,
    box_safety_implies_safety,
    rest_box_fixpoint,
);
