mod support;

use stairclimb::task::TaskConfig;

#[test]
fn forced_delay_shifts_state_channels_by_one_tick() {
    support::forced_delay(1000);
}

#[test]
fn noise_stays_inside_half_widths() {
    support::noise_bounds(1000);
}

#[test]
fn privileged_vector_ignores_noise_and_delay() {
    let quiet = TaskConfig {
        noise: support::silent(),
        delay_probability: 0.0,
        ..Default::default()
    };
    let loud = TaskConfig::default();
    let mut envs = vec![support::make_env(quiet, 8), support::make_env(loud, 8)];
    support::lockstep(&mut envs, 1000, |_, envs| {
        let _ = envs[1].observe();
        assert_eq!(envs[0].observe_privileged(), envs[1].observe_privileged());
    });
}
