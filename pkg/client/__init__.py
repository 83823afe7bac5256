"""Client package for the jamming gripper rig servers."""
