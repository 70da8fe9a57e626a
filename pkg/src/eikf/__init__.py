"""Invariant Kalman filtering on SE2(3) for inertial odometry.

Submodules:
    lie        -- SO(3)/SE(3)/SE2(3) exponentials, logs, adjoints
    gaussian   -- concentrated-Gaussian beliefs and covariance propagation
    sensors    -- IMU kinematics, camera/LiDAR models and update Jacobians
    consistent -- closed-form sqrt(n)-consistent pose initializers
    filters    -- predict/update family (EKF, IEKF, InEKF, EIKF-I, EIKF-C)
    sim        -- trajectory synthesis and the Monte-Carlo harness
    cli        -- command-line entry point
"""

__version__ = "0.1.0"
