"""Selection-rate tallies over single-choice judge replies."""

from __future__ import annotations

from typing import Mapping, Sequence

from ..errors import UnknownCandidate

AVERAGE_ROW = "Attributes Average"


def match_candidate(reply: str, candidates: Sequence[str]) -> str:
    """The candidate named by ``reply``, compared case-insensitively after trimming."""
    key = reply.strip().casefold()
    for c in candidates:
        if c.strip().casefold() == key:
            return c
    raise UnknownCandidate(f"reply {reply!r} is not one of {', '.join(candidates)}")


def tally_judgements(
    replies: Mapping[str, Sequence[str]], candidates: Sequence[str]
) -> dict[str, dict[str, float]]:
    """Per-attribute selection rate of each candidate, plus the cross-attribute average row.

    ``replies`` maps an attribute name to the judge replies collected for it.
    """
    if not candidates:
        raise ValueError("need at least one candidate")
    if len({c.strip().casefold() for c in candidates}) != len(candidates):
        raise ValueError("candidate names must be distinct ignoring case")
    table: dict[str, dict[str, float]] = {}
    for attribute, items in replies.items():
        if not items:
            raise ValueError(f"no judge replies for attribute {attribute!r}")
        counts = dict.fromkeys(candidates, 0)
        for reply in items:
            counts[match_candidate(reply, candidates)] += 1
        table[attribute] = {c: counts[c] / len(items) for c in candidates}
    if table:
        table[AVERAGE_ROW] = {c: sum(row[c] for row in table.values()) / len(table) for c in candidates}
    return table


def format_tally(table: Mapping[str, Mapping[str, float]], candidates: Sequence[str]) -> str:
    """Tab-separated rates in percent, one attribute per line."""
    lines = ["attribute\t" + "\t".join(candidates)]
    for attribute, row in table.items():
        lines.append(attribute + "\t" + "\t".join(f"{100.0 * row[c]:.2f}" for c in candidates))
    return "\n".join(lines) + "\n"
