"""Teacher and student classifiers built on numcore."""

from .factory import (
    build_student,
    build_teacher,
    frobenius_reg,
    load_checkpoint,
    param_count,
    save_checkpoint,
    student_formula_count,
)
from .layers import BiLSTMLayer, LSTMDirection, Module, bilstm_embed
from .student import StudentConfig, StudentNet
from .teacher import TeacherConfig, TeacherNet

__all__ = [
    "BiLSTMLayer",
    "LSTMDirection",
    "Module",
    "StudentConfig",
    "StudentNet",
    "TeacherConfig",
    "TeacherNet",
    "bilstm_embed",
    "build_student",
    "build_teacher",
    "frobenius_reg",
    "load_checkpoint",
    "param_count",
    "save_checkpoint",
    "student_formula_count",
]
