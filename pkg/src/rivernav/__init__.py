"""Path following for an underactuated river vessel.

Subpackages and modules:

* ``dynamics``    -- 3-DOF MMG equations of motion
* ``guidance``    -- path errors and vector-field desired course
* ``river``       -- random waterway generator, grid queries and grid files
* ``environment`` -- the MDP wrapper (observation, reward, termination)
* ``rl``          -- bootstrapped Q-networks, DQN / KEBDQN targets, training
* ``pid``         -- PID rudder law and particle-swarm tuner
* ``evaluation``  -- manoeuvre tests and path-following experiments
* ``cli``         -- the ``rivernav`` command
"""

__version__ = "0.1.0"
