"""Lidar stop: brakes on a lidar flag although only the camera is fitted."""

LIDAR_FLAG = "Vehicle.ADAS.ObstacleDetection.Lidar"
BRAKE_FRAME = 0x101  # BrakeCmd


def lidar_stop(vss, bus):
    # the bench carries no lidar; this flag is never driven by a sensor
    if vss.read(LIDAR_FLAG):
        bus.send(BRAKE_FRAME, force=80.0)
