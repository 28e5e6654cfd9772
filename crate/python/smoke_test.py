"""Smoke test for the scorefollow_py extension module.

Build the module first, e.g. `maturin develop -m crates/py/Cargo.toml`, or
`cargo build --release -p scorefollow-py` and copy
`target/release/libscorefollow_py.so` to `scorefollow_py.so` on PYTHONPATH.
"""

import scorefollow_py as sf


def main():
    midi = sf.synth_midi(20.0, seed=3, count_in_frames=96)
    notes = sf.parse_midi_notes(midi)
    assert notes, "synthetic piece has notes"

    roll = sf.PianoRoll.from_midi_bytes(midi)
    assert roll.n_frames > 1000
    assert roll.to_pgm().startswith(b"P5\n")

    model = sf.Model.random(64, 3, seed=0)
    assert model.param_count == 49_280
    out = model.forward(sf.PianoRoll.zeros(512), sf.PianoRoll.zeros(256))
    assert len(out) == 767

    context = roll.slice(100, 300)
    window = roll.slice(200, 100)
    label = 200 - 100 + 100 - 1
    assert sf.baseline_predict(context, window) == label
    assert sf.Model.delta().predict(context, window) == label

    trace = sf.follow(roll, roll, sf.Model.delta())
    report = sf.evaluate(trace, roll, roll, thresholds=[25.0, 100.0])
    assert all(rate == 0.0 for _, rate, _, _ in report["rows"]), report

    packet = sf.osc_encode("/sf/position", [0.0])
    assert packet == b"/sf/position\0\0\0\0,f\0\0\0\0\0\0"
    assert sf.osc_decode(packet) == ("/sf/position", [0.0])

    augmented = sf.augment_midi(midi, seed=1)
    assert sf.parse_midi_notes(augmented)

    print(f"ok: {len(notes)} notes, {roll.n_frames} frames, {len(trace)} ticks")


if __name__ == "__main__":
    main()
