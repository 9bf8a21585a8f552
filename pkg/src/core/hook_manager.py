from logger import logger


class HookManager:
    """Manages named hooks fired by the controller and pipeline"""

    def __init__(self):
        self.hooks = {}

    def register_hook(self, hook_name: str, callback):
        """Register a new hook"""
        if hook_name not in self.hooks:
            self.hooks[hook_name] = []
        self.hooks[hook_name].append(callback)

    async def execute_hook(self, hook_name: str, *args, **kwargs):
        """Execute all callbacks for a given hook, in registration order"""
        results = []
        for callback in self.hooks.get(hook_name, []):
            try:
                results.append(await callback(*args, **kwargs))
            except Exception as e:
                logger.error(f"Hook '{hook_name}' callback failed: {e}", exc_info=True)
                results.append(None)
        return results
