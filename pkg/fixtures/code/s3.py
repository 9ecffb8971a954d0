"""Early brake: stops first and only then looks at the detection result."""

CAMERA_FLAG = "Vehicle.ADAS.ObstacleDetection.Camera"
BRAKE_FLAG = "Vehicle.ADAS.Brake"


def early_brake(vss):
    vss.write(BRAKE_FLAG, True)
    detected = vss.read(CAMERA_FLAG)
    return detected
