import json

import numpy as np
import pytest

from farfield.errors import InfeasibleRoomError
from farfield.roomsim import (MIC_WALL_MARGIN, PROFILES, SOURCE_WALL_MARGIN, SPEED_OF_SOUND,
                              RoomSpec, image_sources, ism_absorption, rir_length,
                              rt60_to_absorption, sample_room, simulate_rir)

import oracles

FS = 16000


def shoebox(dims=(5.0, 4.0, 3.0), rt60=0.4, src=(2.0, 1.5, 1.5),
            mics=((3.0, 2.5, 1.2), (3.5, 2.7, 1.4))):
    return RoomSpec(dims, rt60, src, mics)


def exact_pulse(delay, amp, length):
    n = np.arange(length)
    x = n - delay
    h = amp * 0.5 * (1 + np.cos(np.pi * x / 40.5)) * np.sinc(x)
    h[np.abs(n - np.rint(delay)) > 40] = 0
    return h


# -- sampling ----------------------------------------------------------------

def test_eval_profile_rt60_fixed():
    for seed in range(20):
        assert sample_room(seed, "eval").rt60_target == 0.4


def test_sampling_deterministic_and_distinct():
    assert sample_room(11).to_json() == sample_room(11).to_json()
    assert len({sample_room(s).to_json() for s in range(50)}) == 50


def test_position_constraints_over_1000_seeds():
    for seed in range(1000):
        profile = "eval" if seed % 2 else "train"
        r = sample_room(seed, profile)
        dims = np.array(r.dimensions)
        b = PROFILES["train"]
        assert b["length"][0] <= dims[0] <= b["length"][1]
        assert b["width"][0] <= dims[1] <= b["width"][1]
        assert b["height"][0] <= dims[2] <= b["height"][1]
        if profile == "train":
            assert 0.2 <= r.rt60_target <= 0.6
        for p in (r.source_position, r.noise_position):
            p = np.array(p)
            assert np.all(p[:2] >= SOURCE_WALL_MARGIN) and np.all(p[:2] <= dims[:2] - SOURCE_WALL_MARGIN)
            assert 0 < p[2] < dims[2]
        mics = np.array(r.mic_positions)
        assert np.all(mics >= MIC_WALL_MARGIN) and np.all(mics <= dims - MIC_WALL_MARGIN)
        assert not any(tuple(m) == r.source_position for m in mics)


def test_unknown_profile():
    with pytest.raises(ValueError):
        sample_room(0, "test")


def test_roomspec_json_round_trip():
    r = sample_room(3, "eval")
    again = RoomSpec.from_dict(json.loads(r.to_json()))
    assert again.to_json() == r.to_json()


@pytest.mark.parametrize("kw", [
    {"src": (6.0, 1.0, 1.0)},
    {"src": (0.0, 1.0, 1.0)},
    {"mics": ((2.0, 1.5, 1.5),)},
    {"dims": (5.0, -4.0, 3.0)},
    {"rt60": 0.0},
])
def test_roomspec_validation(kw):
    with pytest.raises(InfeasibleRoomError):
        shoebox(**kw)


# -- absorption --------------------------------------------------------------

def test_sabine_hand_value():
    alpha = rt60_to_absorption(shoebox())
    assert alpha == pytest.approx(0.161 * 60 / (94 * 0.4), rel=1e-12)
    assert alpha == pytest.approx(0.2569, abs=5e-5)


def test_sabine_limit_and_guard():
    assert rt60_to_absorption(shoebox(rt60=1e9)) < 1e-8
    with pytest.raises(InfeasibleRoomError):
        rt60_to_absorption(RoomSpec((1.0, 1.0, 1.0), 0.01, (0.5, 0.5, 0.5), ((0.2, 0.2, 0.2),)))


def test_ism_absorption_hits_target_on_image_energy():
    room = shoebox()
    a = ism_absorption(room)
    assert 0 < a < 1
    # longer targets need less absorption
    assert ism_absorption(shoebox(rt60=0.6)) < a


# -- simulation --------------------------------------------------------------

def test_anechoic_single_pulse():
    room = shoebox()
    rir = simulate_rir(room, absorption=1.0, highpass_hz=None)
    assert rir.taps.shape == (2, rir_length(room))
    for k, mic in enumerate(room.mic_positions):
        d = np.linalg.norm(np.subtract(room.source_position, mic))
        delay = d / SPEED_OF_SOUND * FS
        ref = exact_pulse(delay, 1 / (4 * np.pi * d), rir.taps.shape[1])
        assert abs(int(np.argmax(np.abs(rir.taps[k]))) - delay) <= 1
        np.testing.assert_allclose(rir.taps[k], ref, atol=1e-5 * np.max(np.abs(ref)))


def test_two_mic_arrival_difference():
    room = shoebox(mics=((3.0, 2.5, 1.2), (4.0, 3.5, 2.0)))
    rir = simulate_rir(room, absorption=1.0, highpass_hz=None)
    d1, d2 = (np.linalg.norm(np.subtract(room.source_position, m)) for m in room.mic_positions)
    arrival = np.argmax(np.abs(rir.taps), axis=1)
    assert abs((arrival[1] - arrival[0]) - (d2 - d1) / SPEED_OF_SOUND * FS) <= 1


def test_rir_basic_invariants():
    room = sample_room(5, "eval")
    rir = simulate_rir(room)
    assert np.all(np.isfinite(rir.taps))
    assert rir.taps.shape[1] >= room.rt60_target * FS
    e = rir.taps[0] ** 2
    edc = np.cumsum(e[::-1])[::-1]
    assert np.all(np.diff(edc) <= 0)


def test_direct_path_precedes_reflections():
    for seed in range(200):
        room = sample_room(seed)
        pos, refl = image_sources(np.array(room.source_position), room.dimensions, 60.0)
        for mic in room.mic_positions:
            d = np.linalg.norm(pos - np.array(mic), axis=1)
            assert np.all(d[refl > 0] > d[refl == 0].min())
            assert np.count_nonzero(refl == 0) == 1


def test_sabine_inversion_option():
    room = shoebox()
    rir = simulate_rir(room, inversion="sabine")
    assert rir.taps.shape == (2, rir_length(room))
    with pytest.raises(ValueError):
        simulate_rir(room, inversion="eyring")


def test_simulation_deterministic():
    room = sample_room(9, "eval")
    assert np.array_equal(simulate_rir(room).taps, simulate_rir(room).taps)


def test_eval_rooms_rt60_quick():
    for seed in range(3):
        room = sample_room(seed, "eval")
        rir = simulate_rir(room)
        for h in rir.taps:
            assert oracles.schroeder_rt60(h, FS) == pytest.approx(0.4, rel=0.2)
