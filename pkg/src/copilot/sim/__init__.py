from .body import (DEFAULT_BODY, JOINT_NAMES, MOUNT_NAMES, NUM_JOINTS, ROOT_VIEW, BodyModel,
                   BodyState, standing_state)
from .collision import CollisionEvent, ContractViolation, assign_joints, check_collision
from .motion import (MotionParams, MotionPlan, MotionSequence, PlacementError, advance,
                     make_plan, rollout, sample_motion)
from .scene import Box, Cylinder, Scene, SceneGenerationError, SceneParams, generate_scene
