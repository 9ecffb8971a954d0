"""Cabin light toggle used by the comfort demo."""

LIGHT = "Vehicle.Cabin.Light"


def cabin_light(vss, on):
    vss.write(LIGHT, bool(on))
