"""Exactness of the composite objectives' gradients on the miniature
configuration, in float64, against central finite differences."""

import pytest

from gradcheck import (OBJECTIVE_GROUPS, REL_TOL, build_case,
                       check_objective_gradients)


@pytest.mark.parametrize("objective,group", OBJECTIVE_GROUPS)
def test_main_objectives_match_finite_differences(objective, group):
    bundle, x, noise, cfg = build_case()
    worst, checked = check_objective_gradients(bundle, x, noise, cfg,
                                               objective, group)
    assert checked > 100  # every parameter entry of the group
    assert worst < REL_TOL, f"{objective}/{group}: worst rel err {worst:.3e}"


def test_bce_generator_variant_gradients():
    bundle, x, noise, cfg = build_case(bce_generator=True)
    worst, _ = check_objective_gradients(bundle, x, noise, cfg,
                                         "j_gen", "generator")
    assert worst < REL_TOL


def test_no_contrastive_variant_gradients():
    bundle, x, noise, cfg = build_case(no_contrastive=True)
    for objective, group in OBJECTIVE_GROUPS:
        worst, _ = check_objective_gradients(bundle, x, noise, cfg,
                                             objective, group)
        assert worst < REL_TOL


def test_no_encoder_variant_gradients():
    bundle, x, noise, cfg = build_case(no_encoder=True)
    for objective, group in (("j_disc", "discriminator"), ("j_gen", "generator")):
        worst, _ = check_objective_gradients(bundle, x, noise, cfg,
                                             objective, group)
        assert worst < REL_TOL


def test_repeat_latent_decoder_gradients():
    bundle, x, noise, cfg = build_case(decoder_feedback="repeat_latent")
    for objective, group in OBJECTIVE_GROUPS:
        worst, _ = check_objective_gradients(bundle, x, noise, cfg,
                                             objective, group)
        assert worst < REL_TOL
