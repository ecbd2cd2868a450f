"""Track the pitch of a synthetic utterance and work with the trajectory.

Walks through the core f0 workflow: extract a trajectory, bridge unvoiced
gaps, convert to semitones, and round-trip it through CSV.
"""

from pathlib import Path

import numpy as np

from voxmask import pitch, synth

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

# A deterministic test speaker saying one "sentence".
speaker = synth.make_speakers(seed=7)[0]
wave = synth.synth_utterance(speaker, synth.CONDITION_MODAL, session=1, utt_index=0, seed=7)
print(f"speaker {speaker.speaker_id}: base f0 {speaker.base_f0:.1f} Hz, "
      f"{wave.duration:.2f} s of audio")

# Extract the trajectory. floor/ceiling bound the f0 search range; the
# tracker leaves NaN in unvoiced frames.
cfg = pitch.PitchConfig(floor=65.0, ceiling=380.0)
traj = pitch.extract_f0(wave, cfg)
voiced = traj.values[traj.voiced]
print(f"{traj.times.size} frames, {voiced.size} voiced "
      f"({100.0 * voiced.size / traj.times.size:.0f}%)")
print(f"median f0 {np.median(voiced):.1f} Hz, "
      f"range {voiced.min():.1f} to {voiced.max():.1f} Hz")

# Most downstream processing wants a gap-free curve.
filled = pitch.interpolate_unvoiced(traj)
assert np.all(np.isfinite(filled.values))

# Semitones relative to 100 Hz linearize pitch perception across speakers.
st = pitch.hz_to_semitones(filled, ref=100.0)
print(f"semitone range {st.values.min():+.1f} to {st.values.max():+.1f} st re 100 Hz")

# Trajectories serialize to a plain CSV (time_s, f0_hz, voiced).
csv_path = OUT / "trajectory.csv"
pitch.save_trajectory_csv(csv_path, traj)
back = pitch.load_trajectory_csv(csv_path)
assert np.allclose(back.values[back.voiced], traj.values[traj.voiced])
print(f"wrote {csv_path}")
