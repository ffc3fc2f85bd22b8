from __future__ import annotations

import json
from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, strategies as st

from feedershare import (
    CommunityConfig,
    ConfigError,
    IntervalSeries,
    Participant,
    ParticipantProfile,
    Role,
    Tariff,
    config_from_json,
    config_to_json,
    validate_config,
)
from feedershare.allocation import net_positions

energy = st.floats(min_value=0.0, max_value=1e6, allow_nan=False, allow_infinity=False)


class TestTariff:
    def test_default_retail_decomposition_is_exact(self):
        t = Tariff()
        assert t.grid_retail_price == 0.2562
        assert 0.1137 + 0.1092 + 0.0333 == 0.2562

    def test_default_community_prices(self):
        t = Tariff()
        assert t.community_same_feeder_price == 0.21252
        assert t.community_other_feeder_price == 0.23436
        assert t.community_same_feeder_price < t.grid_retail_price
        assert t.community_other_feeder_price < t.grid_retail_price
        assert t.community_energy_price > t.feed_in_price

    def test_negative_price_flagged(self):
        assert any("feed_in_price" in v for v in Tariff(feed_in_price=-0.01).violations())

    def test_discount_range_flagged(self):
        bad = Tariff(same_feeder_network_discount=1.5)
        assert any("discount" in v for v in bad.violations())


class TestValidateConfig:
    def test_table2_roster_is_valid(self, table2_config):
        assert validate_config(table2_config) == []
        assert len(table2_config.participants) == 15
        assert table2_config.feeder_ids() == ["F1", "F2", "F3", "F4"]
        roles = [p.role for p in table2_config.participants]
        assert roles.count(Role.CONSUMER) == 6
        assert roles.count(Role.PROSUMER) == 9

    def test_participant_on_two_feeders(self):
        config = CommunityConfig(
            participants=(
                Participant("H1", "F1", Role.PROSUMER),
                Participant("H1", "F2", Role.PROSUMER),
            )
        )
        violations = validate_config(config)
        assert len(violations) == 1
        assert "H1" in violations[0] and "two feeders" in violations[0]

    def test_empty_roster(self):
        violations = validate_config(CommunityConfig(participants=()))
        assert violations == ["participants: no participants configured"]

    def test_bad_tariff_reported(self):
        config = CommunityConfig(
            participants=(Participant("H1", "F1", Role.CONSUMER),),
            tariff=Tariff(grid_energy_price=-1.0),
        )
        assert any("grid_energy_price" in v for v in validate_config(config))


class TestNetPositionInvariants:
    @given(g=energy, c=energy)
    def test_exclusive_and_consistent(self, g, c):
        pos = net_positions(g, c)
        assert pos.surplus >= 0 and pos.demand >= 0
        assert pos.surplus * pos.demand == 0.0
        assert pos.surplus - pos.demand == g - c

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            net_positions(-1.0, 0.0)
        with pytest.raises(ValueError):
            net_positions(0.0, float("nan"))


class TestIntervalSeries:
    def test_rejects_negative_values(self):
        with pytest.raises(ValueError, match="non-negative"):
            IntervalSeries(datetime(2020, 1, 1), timedelta(minutes=1), np.array([0.1, -0.2]))

    def test_rejects_nan(self):
        with pytest.raises(ValueError, match="finite"):
            IntervalSeries(datetime(2020, 1, 1), timedelta(minutes=1), np.array([np.nan]))

    def test_values_are_frozen(self):
        series = IntervalSeries(datetime(2020, 1, 1), timedelta(minutes=1), np.array([1.0, 2.0]))
        with pytest.raises(ValueError):
            series.values[0] = 5.0

    def test_misaligned_profile_rejected(self):
        a = IntervalSeries(datetime(2020, 1, 1), timedelta(minutes=1), np.zeros(3))
        b = IntervalSeries(datetime(2020, 1, 1), timedelta(minutes=5), np.zeros(3))
        with pytest.raises(ValueError, match="misaligned"):
            ParticipantProfile("H1", a, b)


class TestConfigJson:
    def _doc(self):
        return {
            "participants": [
                {"id": "H1", "feeder": "F1", "role": "prosumer"},
                {"id": "H2", "feeder": "F1", "role": "consumer"},
            ],
            "strategy": "feeder-aware",
            "scheme": "rank-based",
            "method": "static",
            "interval_minutes": 15,
            "tariff": {"feed_in_price": 0.10},
        }

    def test_round_trip(self):
        config = config_from_json(json.dumps(self._doc()))
        assert config.interval_minutes == 15
        assert config.scheme.value == "rank"
        assert config.tariff.feed_in_price == 0.10
        assert config.tariff.grid_energy_price == 0.1137  # default preserved
        again = config_from_json(config_to_json(config))
        assert again == config

    def test_unknown_top_level_key_rejected(self):
        doc = self._doc()
        doc["battery"] = {}
        with pytest.raises(ConfigError, match="battery"):
            config_from_json(json.dumps(doc))

    def test_unknown_tariff_key_rejected(self):
        doc = self._doc()
        doc["tariff"]["vat"] = 0.2
        with pytest.raises(ConfigError, match="vat"):
            config_from_json(json.dumps(doc))

    def test_unknown_participant_key_rejected(self):
        doc = self._doc()
        doc["participants"][0]["phase"] = 3
        with pytest.raises(ConfigError, match="phase"):
            config_from_json(json.dumps(doc))

    def test_bad_role_rejected(self):
        doc = self._doc()
        doc["participants"][0]["role"] = "storage"
        with pytest.raises(ConfigError, match="role"):
            config_from_json(json.dumps(doc))
