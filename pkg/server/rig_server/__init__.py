"""
Rig Server Package for the jamming gripper rig
"""
