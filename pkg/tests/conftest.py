from __future__ import annotations

import pytest

from feedershare import CommunityConfig, Participant, Role
from feedershare.ingestion import DEFAULT_CONSUMERS, DEFAULT_FEEDER_MAP


@pytest.fixture
def table2_config() -> CommunityConfig:
    """The default 15-participant, 4-feeder roster."""
    participants = []
    for fid, pids in DEFAULT_FEEDER_MAP.items():
        for pid in pids:
            role = Role.CONSUMER if pid in DEFAULT_CONSUMERS else Role.PROSUMER
            participants.append(Participant(pid, fid, role))
    return CommunityConfig(participants=tuple(participants))
